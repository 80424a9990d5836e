#include "qntn/control_mpc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <tuple>

namespace qntn::mpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool is_psd(const Matrix& m, double tol) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()));
    return es.eigenvalues().minCoeff() >= -tol;
}

Vector bound_or(const Vector& v, int n, double fill) {
    return v.size() == 0 ? Vector::Constant(n, fill) : v;
}

// Condensed prediction X = free + G U over x_1..x_H.
struct Condensed {
    Matrix G;
    Vector free;
};

Condensed condense(const MpcProblem& p, const Vector& x0) {
    const int n = p.state_dim();
    const int m = p.control_dim();
    const int H = p.horizon;
    Condensed c;
    c.G = Matrix::Zero(H * n, H * m);
    c.free = Vector::Zero(H * n);
    Vector x = x0;
    for (int k = 0; k < H; ++k) {
        x = p.A * x;
        if (!p.disturbance.empty()) {
            x += p.disturbance[size_t(k)];
        }
        c.free.segment(k * n, n) = x;
        // Block (k, j) = A^{k-j} B_j.
        c.G.block(k * n, k * m, n, m) = p.input_matrix(k);
        for (int j = 0; j < k; ++j) {
            c.G.block(k * n, j * m, n, m) = p.A * c.G.block((k - 1) * n, j * m, n, m);
        }
    }
    return c;
}

} // namespace

void MpcProblem::validate() const {
    const int n = state_dim();
    if (horizon < 1) {
        throw std::invalid_argument("MpcProblem: horizon must be >= 1");
    }
    if (A.rows() != A.cols() || n == 0) {
        throw std::invalid_argument("MpcProblem: A must be square and non-empty");
    }
    if (!B_steps.empty() && static_cast<int>(B_steps.size()) != horizon) {
        throw std::invalid_argument("MpcProblem: B_steps needs one matrix per step");
    }
    for (int k = 0; k < horizon; ++k) {
        const Matrix& b = input_matrix(k);
        if (b.rows() != n || b.cols() != control_dim() || b.cols() == 0) {
            throw std::invalid_argument("MpcProblem: input matrix has wrong shape");
        }
    }
    const int m = control_dim();
    if (Q.rows() != n || Q.cols() != n || R.rows() != m || R.cols() != m) {
        throw std::invalid_argument("MpcProblem: cost matrices have wrong shape");
    }
    if (!is_psd(Q, 1e-12)) {
        throw std::invalid_argument("MpcProblem: Q must be positive semidefinite");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (R + R.transpose()));
    if (es.eigenvalues().minCoeff() <= 0.0) {
        throw std::invalid_argument("MpcProblem: R must be positive definite");
    }
    if (!disturbance.empty() && static_cast<int>(disturbance.size()) != horizon) {
        throw std::invalid_argument("MpcProblem: disturbance needs one entry per step");
    }
    for (const auto& d : disturbance) {
        if (d.size() != n) {
            throw std::invalid_argument("MpcProblem: disturbance has wrong size");
        }
    }
    auto check_bounds = [](const Vector& lo, const Vector& hi, int dim, const char* what) {
        if ((lo.size() != 0 && lo.size() != dim) || (hi.size() != 0 && hi.size() != dim)) {
            throw std::invalid_argument(std::string("MpcProblem: ") + what + " bounds have wrong size");
        }
        if (lo.size() != 0 && hi.size() != 0 && (lo.array() > hi.array()).any()) {
            throw std::invalid_argument(std::string("MpcProblem: ") + what + " bounds are inverted");
        }
    };
    check_bounds(x_min, x_max, n, "state");
    check_bounds(u_min, u_max, m, "control");
    if (max_iterations < 1 || !(tolerance > 0.0)) {
        throw std::invalid_argument("MpcProblem: bad iteration limit or tolerance");
    }
}

const char* to_string(MpcStatus s) {
    switch (s) {
    case MpcStatus::Optimal: return "optimal";
    case MpcStatus::IterationLimit: return "iteration_limit";
    case MpcStatus::Infeasible: return "infeasible";
    }
    return "?";
}

double mpc_objective(const MpcProblem& p, const Vector& x0, const std::vector<Vector>& u,
                     std::vector<Vector>* states) {
    if (static_cast<int>(u.size()) != p.horizon) {
        throw std::invalid_argument("mpc_objective: control sequence length != horizon");
    }
    Vector x = x0;
    double j = 0.0;
    if (states != nullptr) {
        states->assign(1, x);
    }
    for (int k = 0; k < p.horizon; ++k) {
        j += x.dot(p.Q * x) + u[size_t(k)].dot(p.R * u[size_t(k)]);
        x = p.A * x + p.input_matrix(k) * u[size_t(k)];
        if (!p.disturbance.empty()) {
            x += p.disturbance[size_t(k)];
        }
        if (states != nullptr) {
            states->push_back(x);
        }
    }
    return j + x.dot(p.Q * x);
}

MpcSolution solve_mpc(const MpcProblem& p, const Vector& x0) {
    p.validate();
    const int n = p.state_dim();
    const int m = p.control_dim();
    const int H = p.horizon;
    if (x0.size() != n) {
        throw std::invalid_argument("solve_mpc: x0 has wrong size");
    }

    const Vector xlo = bound_or(p.x_min, n, -kInf);
    const Vector xhi = bound_or(p.x_max, n, kInf);
    const Vector ulo = bound_or(p.u_min, m, -kInf);
    const Vector uhi = bound_or(p.u_max, m, kInf);

    MpcSolution sol;
    if ((x0.array() < xlo.array()).any() || (x0.array() > xhi.array()).any()) {
        sol.status = MpcStatus::Infeasible;
        sol.u.assign(size_t(H), Vector::Zero(m));
        sol.objective = mpc_objective(p, x0, sol.u, &sol.x);
        return sol;
    }

    const Condensed c = condense(p, x0);
    Matrix Qbar = Matrix::Zero(H * n, H * n);
    Matrix Rbar = Matrix::Zero(H * m, H * m);
    for (int k = 0; k < H; ++k) {
        Qbar.block(k * n, k * n, n, n) = p.Q;
        Rbar.block(k * m, k * m, m, m) = p.R;
    }
    const Matrix GtQ = c.G.transpose() * Qbar;
    const Matrix P = 2.0 * (GtQ * c.G + Rbar);
    const Vector q = 2.0 * GtQ * c.free;
    const double constant = x0.dot(p.Q * x0) + c.free.dot(Qbar * c.free);

    // Rows of the stacked state bounds that are finite.
    std::vector<int> lo_rows, hi_rows;
    Vector lo_val(H * n), hi_val(H * n);
    for (int k = 0; k < H; ++k) {
        for (int i = 0; i < n; ++i) {
            const int r = k * n + i;
            lo_val[r] = xlo[i];
            hi_val[r] = xhi[i];
            if (std::isfinite(xlo[i])) {
                lo_rows.push_back(r);
            }
            if (std::isfinite(xhi[i])) {
                hi_rows.push_back(r);
            }
        }
    }
    const bool has_state_bounds = !lo_rows.empty() || !hi_rows.empty();

    const Vector ulo_s = ulo.replicate(H, 1);
    const Vector uhi_s = uhi.replicate(H, 1);
    auto project = [&](const Vector& v) -> Vector {
        return v.cwiseMax(ulo_s).cwiseMin(uhi_s);
    };

    auto quad = [&](const Vector& U) { return 0.5 * U.dot(P * U) + q.dot(U) + constant; };

    // Constraint values g <= 0 for the active bound rows.
    auto violations = [&](const Vector& X, Vector& glo, Vector& ghi) {
        glo.resize(Eigen::Index(lo_rows.size()));
        ghi.resize(Eigen::Index(hi_rows.size()));
        for (size_t i = 0; i < lo_rows.size(); ++i) {
            glo[Eigen::Index(i)] = lo_val[lo_rows[i]] - X[lo_rows[i]];
        }
        for (size_t i = 0; i < hi_rows.size(); ++i) {
            ghi[Eigen::Index(i)] = X[hi_rows[i]] - hi_val[hi_rows[i]];
        }
    };
    auto max_violation = [&](const Vector& U) {
        Vector glo, ghi;
        violations(c.free + c.G * U, glo, ghi);
        double v = 0.0;
        if (glo.size() > 0) {
            v = std::max(v, glo.maxCoeff());
        }
        if (ghi.size() > 0) {
            v = std::max(v, ghi.maxCoeff());
        }
        return v;
    };

    const double l_quad = std::max(Eigen::SelfAdjointEigenSolver<Matrix>(P).eigenvalues().maxCoeff(), 1e-12);
    const double l_pen = has_state_bounds
        ? 2.0 * Eigen::SelfAdjointEigenSolver<Matrix>(c.G.transpose() * c.G).eigenvalues().maxCoeff()
        : 0.0;

    Vector lam_lo = Vector::Zero(Eigen::Index(lo_rows.size()));
    Vector lam_hi = Vector::Zero(Eigen::Index(hi_rows.size()));
    double rho = 10.0;

    // Augmented Lagrangian value and gradient.
    auto merit = [&](const Vector& U, Vector* grad) {
        const Vector X = c.free + c.G * U;
        double f = quad(U);
        if (grad != nullptr) {
            *grad = P * U + q;
        }
        if (!has_state_bounds) {
            return f;
        }
        Vector glo, ghi;
        violations(X, glo, ghi);
        Vector dx = Vector::Zero(H * n);
        for (size_t i = 0; i < lo_rows.size(); ++i) {
            const double s = std::max(0.0, lam_lo[Eigen::Index(i)] + rho * glo[Eigen::Index(i)]);
            f += (s * s - lam_lo[Eigen::Index(i)] * lam_lo[Eigen::Index(i)]) / (2.0 * rho);
            dx[lo_rows[i]] -= s;
        }
        for (size_t i = 0; i < hi_rows.size(); ++i) {
            const double s = std::max(0.0, lam_hi[Eigen::Index(i)] + rho * ghi[Eigen::Index(i)]);
            f += (s * s - lam_hi[Eigen::Index(i)] * lam_hi[Eigen::Index(i)]) / (2.0 * rho);
            dx[hi_rows[i]] += s;
        }
        if (grad != nullptr) {
            *grad += c.G.transpose() * dx;
        }
        return f;
    };

    Vector U = project(Vector::Zero(H * m));
    int total_iterations = 0;
    bool inner_converged = false;

    // Accelerated projected gradient with function-value restart.
    auto inner_solve = [&]() {
        const double L = l_quad + rho * l_pen;
        const double step = 1.0 / L;
        Vector y = U;
        Vector grad;
        double t = 1.0;
        double f_prev = merit(U, nullptr);
        Vector g0;
        merit(U, &g0);
        const double gscale = 1.0 + g0.norm();
        for (int it = 0; it < p.max_iterations; ++it) {
            ++total_iterations;
            merit(y, &grad);
            const Vector U_next = project(y - step * grad);
            const double f = merit(U_next, nullptr);
            const double gmap = L * (U_next - y).norm();
            if (f > f_prev) {
                // Restart momentum from the last iterate.
                t = 1.0;
                y = U;
                continue;
            }
            const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            y = U_next + ((t - 1.0) / t_next) * (U_next - U);
            const double decrease = f_prev - f;
            U = U_next;
            t = t_next;
            f_prev = f;
            if (decrease <= p.tolerance * std::max(1.0, std::abs(f)) && gmap <= 1e-7 * gscale) {
                return true;
            }
        }
        return false;
    };

    if (!has_state_bounds) {
        inner_converged = inner_solve();
    } else {
        double last_violation = kInf;
        for (int outer = 0; outer < 60; ++outer) {
            inner_converged = inner_solve();
            Vector glo, ghi;
            violations(c.free + c.G * U, glo, ghi);
            for (Eigen::Index i = 0; i < glo.size(); ++i) {
                lam_lo[i] = std::max(0.0, lam_lo[i] + rho * glo[i]);
            }
            for (Eigen::Index i = 0; i < ghi.size(); ++i) {
                lam_hi[i] = std::max(0.0, lam_hi[i] + rho * ghi[i]);
            }
            const double v = max_violation(U);
            if (v <= 1e-10 && inner_converged && outer > 0) {
                break;
            }
            if (v > 0.25 * last_violation) {
                rho = std::min(rho * 10.0, 1e8);
            }
            last_violation = v;
        }
    }

    sol.u.resize(size_t(H));
    for (int k = 0; k < H; ++k) {
        sol.u[size_t(k)] = U.segment(k * m, m);
    }
    sol.objective = mpc_objective(p, x0, sol.u, &sol.x);
    sol.iterations = total_iterations;
    sol.max_state_violation = has_state_bounds ? max_violation(U) : 0.0;
    if (sol.max_state_violation > 1e-6) {
        sol.status = MpcStatus::Infeasible;
    } else if (!inner_converged) {
        sol.status = MpcStatus::IterationLimit;
    } else {
        sol.status = MpcStatus::Optimal;
    }
    return sol;
}

// --- Flight plans ------------------------------------------------------------

const char* to_string(LaserLevel l) {
    switch (l) {
    case LaserLevel::Low: return "low";
    case LaserLevel::Nominal: return "nominal";
    case LaserLevel::Turbo: return "turbo";
    }
    return "?";
}

double laser_power_factor(LaserLevel l) {
    switch (l) {
    case LaserLevel::Low: return 0.5;
    case LaserLevel::Nominal: return 1.0;
    case LaserLevel::Turbo: return 1.5;
    }
    return 1.0;
}

const char* to_string(ActionKind k) {
    switch (k) {
    case ActionKind::Downlink: return "downlink";
    case ActionKind::Sleep: return "sleep";
    case ActionKind::LaserPower: return "laser_power";
    case ActionKind::DeferBulk: return "defer_bulk";
    }
    return "?";
}

bool FlightPlan::well_formed() const {
    std::vector<const PlanAction*> exclusive;
    for (const auto& a : actions) {
        if (!(a.t_start < a.t_end)) {
            return false;
        }
        if (a.kind == ActionKind::LaserPower) {
            const bool inside = std::any_of(actions.begin(), actions.end(), [&](const PlanAction& d) {
                return d.kind == ActionKind::Downlink && d.t_start <= a.t_start && a.t_end <= d.t_end;
            });
            if (!inside) {
                return false;
            }
        } else {
            exclusive.push_back(&a);
        }
    }
    std::sort(exclusive.begin(), exclusive.end(),
              [](const PlanAction* x, const PlanAction* y) { return x->t_start < y->t_start; });
    for (size_t i = 1; i < exclusive.size(); ++i) {
        if (exclusive[i]->t_start < exclusive[i - 1]->t_end) {
            return false;
        }
    }
    return true;
}

const PlanAction* FlightPlan::downlink_at(double t) const {
    for (const auto& a : actions) {
        if (a.kind == ActionKind::Downlink && a.t_start <= t && t < a.t_end) {
            return &a;
        }
    }
    return nullptr;
}

std::vector<double> simulate_soc(const FlightPlan& plan, const EnergyModel& e,
                                 const ContactForecast& f, double t0, double t1) {
    std::vector<double> soc{e.soc_wh};
    double s = e.soc_wh;
    for (double t = t0; t < t1; t += e.step_s) {
        const double dt = std::min(e.step_s, t1 - t);
        const double mid = t + 0.5 * dt;
        double load = e.bus_load_w;
        for (const auto& a : plan.actions) {
            if (a.t_start <= mid && mid < a.t_end) {
                if (a.kind == ActionKind::Sleep) {
                    load = e.sleep_load_w;
                } else if (a.kind == ActionKind::Downlink) {
                    load += e.laser_load_w * laser_power_factor(a.level);
                }
            }
        }
        const bool dark = f.in_eclipse ? f.in_eclipse(plan.sat_id, mid) : false;
        const double solar = dark ? 0.0 : e.solar_w;
        s = std::clamp(s + (solar - load) * dt / 3600.0, 0.0, e.capacity_wh);
        soc.push_back(s);
    }
    return soc;
}

namespace {

struct Pass {
    int sat = 0;
    double t0 = 0.0;
    double t1 = 0.0;
    std::vector<orbits::ContactWindow> windows;
};

bool reserve_ok(const FlightPlan& plan, const EnergyModel& e, const ContactForecast& f,
                double t0, double t1) {
    const auto soc = simulate_soc(plan, e, f, t0, t1);
    return std::all_of(soc.begin(), soc.end(), [&](double s) { return s >= e.reserve_wh - 1e-9; });
}

void sort_actions(FlightPlan& plan) {
    std::stable_sort(plan.actions.begin(), plan.actions.end(),
                     [](const PlanAction& a, const PlanAction& b) { return a.t_start < b.t_start; });
}

} // namespace

std::map<int, FlightPlan> plan_contacts(const std::vector<orbits::ContactWindow>& windows,
                                        const ContactForecast& f,
                                        const std::map<int, EnergyModel>& energy, double t0,
                                        double t1, const std::map<std::string, int>& site_capacity,
                                        const std::vector<SiteBooking>& committed) {
    std::map<int, std::vector<orbits::ContactWindow>> by_sat;
    for (const auto& w : windows) {
        if (w.t_set > t0 && w.t_rise < t1) {
            by_sat[w.sat_id].push_back(w);
        }
    }
    std::vector<Pass> passes;
    for (auto& [sat, ws] : by_sat) {
        std::sort(ws.begin(), ws.end(), [](const auto& a, const auto& b) {
            return std::tie(a.t_rise, a.site_id) < std::tie(b.t_rise, b.site_id);
        });
        for (const auto& w : ws) {
            if (passes.empty() || passes.back().sat != sat || w.t_rise >= passes.back().t1) {
                passes.push_back(Pass{sat, w.t_rise, w.t_set, {}});
            }
            passes.back().t1 = std::max(passes.back().t1, w.t_set);
            passes.back().windows.push_back(w);
        }
    }
    std::stable_sort(passes.begin(), passes.end(), [](const Pass& a, const Pass& b) {
        return std::tie(a.t0, a.sat) < std::tie(b.t0, b.sat);
    });

    std::map<int, FlightPlan> plans;
    for (const auto& [sat, e] : energy) {
        plans[sat].sat_id = sat;
    }
    struct Booking {
        std::string site;
        double a, b;
    };
    std::vector<Booking> bookings;
    for (const auto& c : committed) {
        bookings.push_back({c.site_id, c.t0, c.t1});
    }
    auto site_free = [&](const std::string& site, double a, double b) {
        auto it = site_capacity.find(site);
        if (it == site_capacity.end()) {
            return true;
        }
        int overlapping = 0;
        for (const auto& bk : bookings) {
            if (bk.site == site && bk.a < b && a < bk.b) {
                ++overlapping;
            }
        }
        return overlapping < it->second;
    };

    for (const auto& pass : passes) {
        auto& plan = plans[pass.sat];
        plan.sat_id = pass.sat;
        struct Candidate {
            double score;
            double bits;
            double ci;
            const orbits::ContactWindow* w;
            double a, b;
        };
        std::vector<Candidate> cands;
        for (const auto& w : pass.windows) {
            const double a = std::max(w.t_rise, t0);
            const double b = std::min(w.t_set, t1);
            if (!(a < b)) {
                continue;
            }
            const double bits = f.key_bits ? f.key_bits(pass.sat, w.site_id, a, b) : 0.0;
            if (!(bits > 0.0)) {
                continue;
            }
            const double ci = f.site_ci ? f.site_ci(w.site_id, 0.5 * (a + b)) : 0.0;
            double score = bits;
            if (f.carbon_grams && f.carbon_weight > 0.0) {
                score -= f.carbon_weight * f.carbon_grams(w.site_id, a, b);
            }
            cands.push_back({score, bits, ci, &w, a, b});
        }
        std::sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) {
            if (x.score != y.score) {
                return x.score > y.score;
            }
            if (x.ci != y.ci) {
                return x.ci < y.ci;
            }
            return x.w->site_id < y.w->site_id;
        });
        auto eit = energy.find(pass.sat);
        for (const auto& cand : cands) {
            if (!site_free(cand.w->site_id, cand.a, cand.b)) {
                continue;
            }
            bool placed = false;
            for (LaserLevel level : {LaserLevel::Nominal, LaserLevel::Low}) {
                FlightPlan trial = plan;
                trial.actions.push_back(
                    PlanAction{ActionKind::Downlink, cand.a, cand.b, cand.w->site_id, level, {}});
                if (level != LaserLevel::Nominal) {
                    trial.actions.push_back(
                        PlanAction{ActionKind::LaserPower, cand.a, cand.b, cand.w->site_id, level, {}});
                }
                if (eit == energy.end() || reserve_ok(trial, eit->second, f, t0, t1)) {
                    plan = std::move(trial);
                    sort_actions(plan);
                    placed = true;
                    break;
                }
            }
            if (placed) {
                bookings.push_back({cand.w->site_id, cand.a, cand.b});
                break;
            }
        }
    }

    // Idle gaps of at least two planning steps become sleep intervals.
    for (auto& [sat, plan] : plans) {
        auto eit = energy.find(sat);
        const double min_gap = 2.0 * (eit == energy.end() ? 60.0 : eit->second.step_s);
        std::vector<PlanAction> sleeps;
        double cursor = t0;
        for (const auto& a : plan.actions) {
            if (a.kind != ActionKind::Downlink) {
                continue;
            }
            if (a.t_start - cursor >= min_gap) {
                sleeps.push_back(PlanAction{ActionKind::Sleep, cursor, a.t_start, {}, LaserLevel::Low, {}});
            }
            cursor = std::max(cursor, a.t_end);
        }
        if (t1 - cursor >= min_gap) {
            sleeps.push_back(PlanAction{ActionKind::Sleep, cursor, t1, {}, LaserLevel::Low, {}});
        }
        plan.actions.insert(plan.actions.end(), sleeps.begin(), sleeps.end());
        sort_actions(plan);
    }
    return plans;
}

// --- Carbon-aware deferral ---------------------------------------------------

double deferral_cost(const net::FlowDemand& flow, double power_w, const std::string& region,
                     double t_start, const std::function<double(const std::string&, double)>& ci,
                     double step_s) {
    double grams = 0.0;
    const double t_end = t_start + flow.duration_s;
    for (double t = t_start; t < t_end; t += step_s) {
        const double dt = std::min(step_s, t_end - t);
        grams += net::carbon_grams(power_w, ci(region, t), dt);
    }
    return grams;
}

std::vector<DeferDecision>
carbon_aware_defer(const std::vector<net::FlowDemand>& flows,
                   const std::vector<TransmitWindow>& windows, double power_w,
                   const std::function<double(const std::string&, double)>& ci,
                   const std::string& default_region, double step_s) {
    std::vector<DeferDecision> out;
    out.reserve(flows.size());
    for (const auto& flow : flows) {
        DeferDecision best{flow.flow_id, flow.start_s, default_region, 0.0, false};
        const double slack = flow.deadline_s - flow.end_s();
        if (!(slack > 0.0)) {
            best.forecast_grams = deferral_cost(flow, power_w, default_region, flow.start_s, ci, step_s);
            out.push_back(best);
            continue;
        }
        bool found = false;
        for (const auto& w : windows) {
            const double start = std::max(w.t_start, flow.start_s);
            const double end = start + flow.duration_s;
            if (end > w.t_end + 1e-9 || end > flow.deadline_s + 1e-9) {
                continue;
            }
            const double g = deferral_cost(flow, power_w, w.region_id, start, ci, step_s);
            const double tie = 1e-12 * std::max(1.0, std::abs(g));
            const bool better = !found || g < best.forecast_grams - tie ||
                                (std::abs(g - best.forecast_grams) <= tie &&
                                 std::tie(start, w.region_id) < std::tie(best.t_start, best.region_id));
            if (better) {
                best = DeferDecision{flow.flow_id, start, w.region_id, g, start > flow.start_s};
                found = true;
            }
        }
        if (!found) {
            best.forecast_grams = deferral_cost(flow, power_w, default_region, flow.start_s, ci, step_s);
        }
        out.push_back(best);
    }
    return out;
}

double predict_handover_horizon(const orbits::ContactWindow& window, double t, double lead_time_s) {
    return std::max(t, window.t_set - lead_time_s);
}

} // namespace qntn::mpc
