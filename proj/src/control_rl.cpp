#include "qntn/control_rl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace qntn::rl {

std::array<double, kLinkFeatures> link_features(const RlState& s, size_t link,
                                                const FeatureScales& sc) {
    const auto& l = s.links.at(link);
    auto unit = [](double v) { return std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0; };
    const double key_n = unit(l.key_buffer_bits / sc.key_bits);
    const double keyed = l.key_bearing ? 1.0 : 0.0;
    const double type_i = s.head_class == net::TrafficClass::TypeI ? 1.0 : 0.0;
    return {unit(l.queue_depth_bits / sc.queue_bits),
            unit(l.link_quality),
            l.key_bearing ? key_n : 0.0,
            unit(l.neighbor_load),
            keyed,
            keyed * type_i,
            l.key_bearing ? 1.0 - key_n : 0.0};
}

bool RlAction::valid(size_t links) const {
    if (next_hop_weights.size() != links) {
        return false;
    }
    double sum = 0.0;
    for (double w : next_hop_weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            return false;
        }
        sum += w;
    }
    if (failsafe) {
        return sum == 0.0 && hop < 0;
    }
    return std::abs(sum - 1.0) <= 1e-9 && hop >= 0 && hop < static_cast<int>(links);
}

void RewardWeights::validate() const {
    if (alpha_r < 0.0 || beta_r < 0.0 || gamma_r < 0.0 || delta_r < 0.0) {
        throw std::invalid_argument("RewardWeights: coefficients must be non-negative");
    }
}

double reward(const Transition& tr, const RewardWeights& w) {
    if (!(tr.skr_target > 0.0)) {
        throw std::invalid_argument("reward: skr_target must be positive");
    }
    return w.alpha_r * tr.skr_meas / tr.skr_target - w.beta_r * tr.latency -
           w.gamma_r * tr.carbon - (tr.key_outage ? w.delta_r : 0.0);
}

// --- Shield ------------------------------------------------------------------

bool Predicate::holds(const LinkObservation& l) const {
    double v = 0.0;
    switch (feature) {
    case Feature::KeyBuffer: v = l.key_buffer_bits; break;
    case Feature::LinkQuality: v = l.link_quality; break;
    case Feature::QueueDepth: v = l.queue_depth_bits; break;
    case Feature::NeighborLoad: v = l.neighbor_load; break;
    }
    switch (cmp) {
    case Cmp::Less: return v < threshold;
    case Cmp::LessEq: return v <= threshold;
    case Cmp::Greater: return v > threshold;
    case Cmp::GreaterEq: return v >= threshold;
    }
    return false;
}

ShieldRule canonical_rule(double critical_threshold_bits) {
    return ShieldRule{"type-i-key-starved",
                      net::TrafficClass::TypeI,
                      {Predicate{Feature::KeyBuffer, Cmp::Less, critical_threshold_bits}},
                      Override::RouteClassical};
}

ShieldRuleSet default_rules(double critical_threshold_bits) {
    return ShieldRuleSet{{canonical_rule(critical_threshold_bits)}};
}

bool ShieldRuleSet::has_canonical() const {
    return std::any_of(rules.begin(), rules.end(), [](const ShieldRule& r) {
        return r.cls == net::TrafficClass::TypeI && r.action == Override::RouteClassical &&
               r.all_of.size() == 1 && r.all_of[0].feature == Feature::KeyBuffer &&
               r.all_of[0].cmp == Cmp::Less;
    });
}

ShieldResult shield_filter(const RlState& s, const RlAction& proposed, const ShieldRuleSet& rules) {
    ShieldResult out{proposed, false, {}};
    if (proposed.failsafe) {
        return out;
    }
    const size_t n = s.links.size();
    int classical = -1;
    for (size_t i = 0; i < n; ++i) {
        if (!s.links[i].key_bearing) {
            classical = static_cast<int>(i);
            break;
        }
    }
    auto first_match = [&](size_t i) -> const ShieldRule* {
        if (!s.links[i].key_bearing) {
            return nullptr;
        }
        for (const auto& r : rules.rules) {
            if (r.cls && *r.cls != s.head_class) {
                continue;
            }
            const bool all = std::all_of(r.all_of.begin(), r.all_of.end(),
                                         [&](const Predicate& p) { return p.holds(s.links[i]); });
            if (all) {
                return &r;
            }
        }
        return nullptr;
    };

    RlAction a = proposed;
    for (size_t i = 0; i < n && i < a.next_hop_weights.size(); ++i) {
        const bool used = a.next_hop_weights[i] > 0.0 || a.hop == static_cast<int>(i);
        if (!used) {
            continue;
        }
        const ShieldRule* r = first_match(i);
        if (r == nullptr) {
            continue;
        }
        out.overridden = true;
        if (out.rule.empty()) {
            out.rule = r->name;
        }
        if (r->action == Override::Failsafe || classical < 0) {
            a.failsafe = true;
            break;
        }
        a.next_hop_weights[size_t(classical)] += a.next_hop_weights[i];
        a.next_hop_weights[i] = 0.0;
        if (a.hop == static_cast<int>(i)) {
            a.hop = classical;
        }
    }
    if (a.failsafe) {
        std::fill(a.next_hop_weights.begin(), a.next_hop_weights.end(), 0.0);
        a.hop = -1;
    }
    out.action = std::move(a);
    return out;
}

// --- Policy ------------------------------------------------------------------

namespace {

std::vector<double> softmax(const std::vector<double>& z) {
    std::vector<double> p(z.size());
    if (z.empty()) {
        return p;
    }
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (size_t i = 0; i < z.size(); ++i) {
        p[i] = std::exp(z[i] - mx);
        sum += p[i];
    }
    for (double& v : p) {
        v /= sum;
    }
    return p;
}

std::array<double, kLaserFeatures> laser_features(const RlState& s, const FeatureScales& sc) {
    double min_key = 1.0;
    double quality = 0.0;
    int keyed = 0;
    for (const auto& l : s.links) {
        if (l.key_bearing) {
            min_key = std::min(min_key, std::clamp(l.key_buffer_bits / sc.key_bits, 0.0, 1.0));
            quality += std::clamp(l.link_quality, 0.0, 1.0);
            ++keyed;
        }
    }
    return {1.0, keyed > 0 ? 1.0 - min_key : 0.0, keyed > 0 ? quality / keyed : 0.0};
}

int sample_index(const std::vector<double>& p, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double x = u(rng);
    double acc = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        acc += p[i];
        if (x < acc) {
            return static_cast<int>(i);
        }
    }
    return static_cast<int>(p.size()) - 1;
}

int argmax(const std::vector<double>& v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

} // namespace

std::vector<double> hop_probabilities(const Policy& p, const RlState& s) {
    std::vector<double> z(s.links.size());
    for (size_t i = 0; i < s.links.size(); ++i) {
        const auto f = link_features(s, i, p.scales);
        z[i] = std::inner_product(f.begin(), f.end(), p.theta.begin(), 0.0);
    }
    return softmax(z);
}

std::array<double, kLaserLevels> laser_probabilities(const Policy& p, const RlState& s) {
    const auto f = laser_features(s, p.scales);
    std::vector<double> z(kLaserLevels);
    for (int k = 0; k < kLaserLevels; ++k) {
        z[size_t(k)] = std::inner_product(f.begin(), f.end(), p.laser_theta[size_t(k)].begin(), 0.0);
    }
    const auto v = softmax(z);
    return {v[0], v[1], v[2]};
}

RlAction policy_act(const Policy& p, const RlState& s, Rng& rng) {
    RlAction a;
    if (s.links.empty()) {
        a.failsafe = true;
        return a;
    }
    const auto probs = hop_probabilities(p, s);
    const auto lp = laser_probabilities(p, s);
    const std::vector<double> lpv(lp.begin(), lp.end());
    int level = 0;
    if (p.mode == PolicyMode::Greedy) {
        a.hop = argmax(probs);
        a.next_hop_weights.assign(probs.size(), 0.0);
        a.next_hop_weights[size_t(a.hop)] = 1.0;
        level = argmax(lpv);
    } else {
        a.next_hop_weights = probs;
        a.hop = sample_index(probs, rng);
        level = sample_index(lpv, rng);
    }
    a.laser = static_cast<mpc::LaserLevel>(level);
    return a;
}

// --- Toy environment ---------------------------------------------------------

ToyEnv::ToyEnv(ToyEnvConfig cfg) : cfg_(cfg) {
    if (cfg_.demand_bits <= 0.0 || cfg_.steps < 1) {
        throw std::invalid_argument("ToyEnv: demand and episode length must be positive");
    }
}

RlState ToyEnv::observe() const {
    RlState s;
    s.head_class = net::TrafficClass::TypeI;
    for (int i = 0; i < 2; ++i) {
        LinkObservation l;
        l.link_id = "src:q" + std::to_string(i + 1);
        l.next_hop = "q" + std::to_string(i + 1);
        l.link_quality = good_[i] ? 0.9 : 0.2;
        l.key_buffer_bits = buffer_[i];
        l.key_bearing = true;
        s.links.push_back(l);
    }
    LinkObservation c;
    c.link_id = "src:c";
    c.next_hop = "c";
    c.link_quality = 1.0;
    c.key_bearing = false;
    s.links.push_back(c);
    return s;
}

RlState ToyEnv::reset(Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    t_ = 0;
    for (int i = 0; i < 2; ++i) {
        buffer_[i] = 5.0 * cfg_.demand_bits;
        good_[i] = u(rng) < 0.5;
    }
    return observe();
}

ToyEnv::StepResult ToyEnv::step(const RlAction& a, Rng& rng) {
    StepResult r;
    r.tr.skr_target = cfg_.demand_bits;
    const double power = mpc::laser_power_factor(a.laser);
    if (!a.failsafe && a.hop >= 0 && a.hop < 2) {
        double& buf = buffer_[a.hop];
        if (buf >= cfg_.demand_bits) {
            buf -= cfg_.demand_bits;
            r.tr.skr_meas = cfg_.demand_bits;
        } else {
            r.tr.key_outage = true;
        }
        r.tr.latency = cfg_.latency_keyed;
        r.tr.carbon = cfg_.carbon_keyed;
    } else {
        r.tr.latency = cfg_.latency_classical;
    }
    if (a.laser == mpc::LaserLevel::Turbo) {
        r.tr.carbon += cfg_.carbon_turbo_extra;
    }
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 2; ++i) {
        const double gen = (good_[i] ? cfg_.skr_good_bits : cfg_.skr_bad_bits) * power;
        buffer_[i] = std::min(cfg_.buffer_cap_bits, buffer_[i] + gen);
        const double flip = good_[i] ? cfg_.p_good_to_bad : cfg_.p_bad_to_good;
        if (u(rng) < flip) {
            good_[i] = !good_[i];
        }
    }
    ++t_;
    r.done = t_ >= cfg_.steps;
    r.state = observe();
    return r;
}

EpisodeStats run_episode(const Policy& p, ToyEnv& env, const RewardWeights& w,
                         const ShieldRuleSet* shield, Rng& rng) {
    EpisodeStats st;
    RlState s = env.reset(rng);
    for (;;) {
        RlAction a = policy_act(p, s, rng);
        if (shield != nullptr) {
            auto res = shield_filter(s, a, *shield);
            st.shield_overrides += res.overridden ? 1 : 0;
            a = std::move(res.action);
        }
        auto out = env.step(a, rng);
        st.total_return += reward(out.tr, w);
        st.outages += out.tr.key_outage ? 1 : 0;
        s = std::move(out.state);
        if (out.done) {
            break;
        }
    }
    return st;
}

TrainResult train(Policy initial, const ToyEnvConfig& env_cfg, const RewardWeights& w,
                  const TrainConfig& cfg) {
    w.validate();
    TrainResult result;
    result.policy = initial;
    result.policy.mode = PolicyMode::Stochastic;
    Policy& p = result.policy;
    ToyEnv env(env_cfg);
    Rng rng(cfg.seed);
    const ShieldRuleSet rules = default_rules(env.critical_threshold());
    const double discount = 0.99;

    struct StepLog {
        std::array<double, kLinkFeatures> grad_hop{};
        std::array<double, kLaserFeatures> lf{};
        std::array<double, kLaserLevels> lp{};
        int level = 0;
        double r = 0.0;
    };
    std::vector<StepLog> log;
    for (int ep = 0; ep < cfg.episodes; ++ep) {
        log.clear();
        int outages = 0;
        RlState s = env.reset(rng);
        for (;;) {
            const RlAction proposed = policy_act(p, s, rng);
            RlAction a = proposed;
            if (cfg.shield) {
                a = shield_filter(s, proposed, rules).action;
            }
            StepLog sl;
            // Score-function gradient for the hop that was executed.
            if (a.hop >= 0) {
                const auto probs = hop_probabilities(p, s);
                const auto fc = link_features(s, size_t(a.hop), p.scales);
                for (int k = 0; k < kLinkFeatures; ++k) {
                    double expect = 0.0;
                    for (size_t i = 0; i < s.links.size(); ++i) {
                        expect += probs[i] * link_features(s, i, p.scales)[size_t(k)];
                    }
                    sl.grad_hop[size_t(k)] = fc[size_t(k)] - expect;
                }
            }
            sl.lf = laser_features(s, p.scales);
            sl.lp = laser_probabilities(p, s);
            sl.level = static_cast<int>(a.laser);
            auto out = env.step(a, rng);
            sl.r = reward(out.tr, w);
            outages += out.tr.key_outage ? 1 : 0;
            log.push_back(sl);
            s = std::move(out.state);
            if (out.done) {
                break;
            }
        }

        std::vector<double> ret(log.size());
        double g = 0.0;
        double total = 0.0;
        for (size_t i = log.size(); i-- > 0;) {
            g = log[i].r + discount * g;
            ret[i] = g;
            total += log[i].r;
        }
        if (!std::isfinite(total)) {
            throw std::runtime_error("train: non-finite return at episode " + std::to_string(ep));
        }
        const double mean = std::accumulate(ret.begin(), ret.end(), 0.0) / double(ret.size());
        double var = 0.0;
        for (double v : ret) {
            var += (v - mean) * (v - mean);
        }
        const double sd = std::sqrt(var / double(ret.size())) + 1e-8;

        std::array<double, kLinkFeatures> dtheta{};
        std::array<std::array<double, kLaserFeatures>, kLaserLevels> dlaser{};
        for (size_t i = 0; i < log.size(); ++i) {
            const double adv = (ret[i] - mean) / sd;
            for (int k = 0; k < kLinkFeatures; ++k) {
                dtheta[size_t(k)] += adv * log[i].grad_hop[size_t(k)];
            }
            for (int lvl = 0; lvl < kLaserLevels; ++lvl) {
                const double ind = lvl == log[i].level ? 1.0 : 0.0;
                for (int k = 0; k < kLaserFeatures; ++k) {
                    dlaser[size_t(lvl)][size_t(k)] +=
                        adv * (ind - log[i].lp[size_t(lvl)]) * log[i].lf[size_t(k)];
                }
            }
        }
        const double scale = cfg.learning_rate / double(log.size());
        for (int k = 0; k < kLinkFeatures; ++k) {
            p.theta[size_t(k)] += scale * dtheta[size_t(k)];
        }
        for (int lvl = 0; lvl < kLaserLevels; ++lvl) {
            for (int k = 0; k < kLaserFeatures; ++k) {
                p.laser_theta[size_t(lvl)][size_t(k)] += scale * dlaser[size_t(lvl)][size_t(k)];
            }
        }
        result.curve.push_back(LearningPoint{ep, total, outages});
        result.type_i_outages += outages;
    }
    return result;
}

std::string learning_curve_csv(const std::vector<LearningPoint>& curve) {
    std::ostringstream os;
    os.precision(17);
    os << "episode,mean_return,outage_count\n";
    for (const auto& pt : curve) {
        os << pt.episode << ',' << pt.mean_return << ',' << pt.outage_count << '\n';
    }
    return os.str();
}

// --- Baseline ----------------------------------------------------------------

std::optional<Route> baseline_shortest_path(const net::TimeVaryingGraph& g, const std::string& src,
                                            const std::string& dst) {
    if (!g.has_node(src) || !g.has_node(dst)) {
        return std::nullopt;
    }
    struct Label {
        double d;
        std::vector<std::string> path;
        bool operator<(const Label& o) const { return std::tie(d, path) < std::tie(o.d, o.path); }
    };
    std::map<std::string, Label> best;
    std::set<std::string> done;
    best[src] = Label{0.0, {src}};
    while (true) {
        const std::string* pick = nullptr;
        for (const auto& [node, lab] : best) {
            if (done.count(node) == 0 && (pick == nullptr || lab < best.at(*pick))) {
                pick = &node;
            }
        }
        if (pick == nullptr) {
            return std::nullopt;
        }
        const std::string u = *pick;
        if (u == dst) {
            return Route{best[u].path, best[u].d};
        }
        done.insert(u);
        const Label lu = best[u];
        for (const auto* e : g.incident(u)) {
            if (e->status == net::EdgeStatus::Down) {
                continue;
            }
            const std::string& v = e->other(u);
            if (done.count(v) > 0) {
                continue;
            }
            Label cand{lu.d + e->latency_s, lu.path};
            cand.path.push_back(v);
            auto it = best.find(v);
            if (it == best.end() || cand < it->second) {
                best[v] = std::move(cand);
            }
        }
    }
}

} // namespace qntn::rl
