#pragma once

// Tier-1 scheduler: box-constrained linear-quadratic MPC, per-pass contact
// planning, carbon-aware deferral of bulk flows and handover timing.

#include "qntn/netmodel.hpp"
#include "qntn/orbits.hpp"

#include <Eigen/Dense>

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace qntn::mpc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// x_{k+1} = A x_k + B_k u_k + d_k, k = 0..H-1.
// J = sum_{k=0}^{H-1} (x_k' Q x_k + u_k' R u_k) + x_H' Q x_H.
// State bounds apply to x_1..x_H; x_0 is given.
struct MpcProblem {
    int horizon = 1;
    Matrix A;
    Matrix B;
    std::vector<Matrix> B_steps;      // optional time-varying input matrices
    Matrix Q;
    Matrix R;
    std::vector<Vector> disturbance;  // empty or one entry per step
    Vector x_min, x_max;              // empty: unbounded
    Vector u_min, u_max;
    int max_iterations = 10000;
    double tolerance = 1e-8;

    int state_dim() const { return static_cast<int>(A.rows()); }
    int control_dim() const { return static_cast<int>(B_steps.empty() ? B.cols() : B_steps[0].cols()); }
    const Matrix& input_matrix(int k) const { return B_steps.empty() ? B : B_steps[size_t(k)]; }
    void validate() const;
};

enum class MpcStatus { Optimal, IterationLimit, Infeasible };
const char* to_string(MpcStatus s);

struct MpcSolution {
    MpcStatus status = MpcStatus::Optimal;
    std::vector<Vector> u;   // H controls
    std::vector<Vector> x;   // H + 1 states
    double objective = 0.0;
    int iterations = 0;
    double max_state_violation = 0.0;
};

// Objective and trajectory of a given control sequence.
double mpc_objective(const MpcProblem& p, const Vector& x0, const std::vector<Vector>& u,
                     std::vector<Vector>* states = nullptr);

// Accelerated projected gradient on the condensed problem; state bounds are
// handled by an augmented Lagrangian outer loop. Infeasible when x0 violates
// the state bounds or no admissible control keeps the states inside them.
MpcSolution solve_mpc(const MpcProblem& p, const Vector& x0);

// --- Flight plans ------------------------------------------------------------

enum class LaserLevel { Low, Nominal, Turbo };
const char* to_string(LaserLevel l);
double laser_power_factor(LaserLevel l);

enum class ActionKind { Downlink, Sleep, LaserPower, DeferBulk };
const char* to_string(ActionKind k);

struct PlanAction {
    ActionKind kind = ActionKind::Downlink;
    double t_start = 0.0;
    double t_end = 0.0;
    std::string site_id;                 // downlink
    LaserLevel level = LaserLevel::Nominal;
    std::string flow_id;                 // defer_bulk
};

struct FlightPlan {
    int sat_id = 0;
    std::vector<PlanAction> actions;     // ordered by t_start

    // Downlink, sleep and defer actions are mutually non-overlapping; laser
    // power actions must sit inside a downlink.
    bool well_formed() const;
    const PlanAction* downlink_at(double t) const;
};

struct EnergyModel {
    double capacity_wh = 100.0;
    double reserve_wh = 20.0;
    double soc_wh = 80.0;
    double bus_load_w = 20.0;
    double sleep_load_w = 8.0;
    double laser_load_w = 40.0;      // nominal laser + terminal
    double solar_w = 60.0;           // sunlit input
    double step_s = 60.0;
};

// What the planner knows ahead of time about each candidate contact.
struct ContactForecast {
    // Expected key bits from a downlink to site over [t0, t1) at nominal power.
    std::function<double(int sat, const std::string& site, double t0, double t1)> key_bits;
    std::function<double(const std::string& site, double t)> site_ci;
    std::function<bool(int sat, double t)> in_eclipse;
    // Optional ground-side emissions of a downlink, grams. Candidates are
    // scored as key bits - carbon_weight * grams.
    std::function<double(const std::string& site, double t0, double t1)> carbon_grams;
    double carbon_weight = 0.0;
};

// Battery trajectory of a plan under the energy model, sampled at step_s.
std::vector<double> simulate_soc(const FlightPlan& plan, const EnergyModel& e,
                                 const ContactForecast& f, double t0, double t1);

// One downlink site per pass (or none). Candidates are ranked by score
// (forecast key bits less the weighted carbon), then lower site CI, then
// site id; a choice that would breach the
// reserve is retried at low laser power and skipped if still unsafe. Sites
// listed in site_capacity accept at most that many concurrent downlinks,
// counting the already committed bookings.
struct SiteBooking {
    std::string site_id;
    double t0 = 0.0;
    double t1 = 0.0;
};

std::map<int, FlightPlan> plan_contacts(const std::vector<orbits::ContactWindow>& windows,
                                        const ContactForecast& f,
                                        const std::map<int, EnergyModel>& energy, double t0,
                                        double t1,
                                        const std::map<std::string, int>& site_capacity = {},
                                        const std::vector<SiteBooking>& committed = {});

// --- Carbon-aware deferral ---------------------------------------------------

struct TransmitWindow {
    double t_start = 0.0;
    double t_end = 0.0;
    std::string region_id;
};

struct DeferDecision {
    std::string flow_id;
    double t_start = 0.0;
    std::string region_id;
    double forecast_grams = 0.0;
    bool deferred = false;
};

// Forecast grams for running a flow on a window starting at t_start.
double deferral_cost(const net::FlowDemand& flow, double power_w, const std::string& region,
                     double t_start, const std::function<double(const std::string&, double)>& ci,
                     double step_s = 60.0);

// Picks, per bulk flow, the feasible start minimizing forecast carbon, ties
// to the earliest start. Flows without slack or without a feasible window
// start immediately.
std::vector<DeferDecision>
carbon_aware_defer(const std::vector<net::FlowDemand>& flows,
                   const std::vector<TransmitWindow>& windows, double power_w,
                   const std::function<double(const std::string&, double)>& ci,
                   const std::string& default_region, double step_s = 60.0);

// --- Handover horizon --------------------------------------------------------

// t_set - lead_time for the window covering t, clamped to t.
double predict_handover_horizon(const orbits::ContactWindow& window, double t,
                                double lead_time_s = 30.0);

} // namespace qntn::mpc
