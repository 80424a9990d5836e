#pragma once

// Tier-2 agent: reward, safety shield, linear softmax routing policy with a
// REINFORCE learner, the toy training environment, and the shortest-path
// baseline.

#include "qntn/control_mpc.hpp"
#include "qntn/netmodel.hpp"

#include <array>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace qntn::rl {

using Rng = std::mt19937_64;

struct LinkObservation {
    std::string link_id;
    std::string next_hop;
    double queue_depth_bits = 0.0;
    double link_quality = 0.0;       // eta or an RSSI proxy in [0, 1]
    double key_buffer_bits = 0.0;
    double neighbor_load = 0.0;      // utilization in [0, 1]
    bool key_bearing = true;         // false for plain classical links
};

struct RlState {
    std::vector<LinkObservation> links;
    net::TrafficClass head_class = net::TrafficClass::TypeI;
};

struct FeatureScales {
    double queue_bits = 1e6;
    double key_bits = 1e6;
};

inline constexpr int kLinkFeatures = 7;
inline constexpr int kLaserFeatures = 3;
inline constexpr int kLaserLevels = 3;

// Per-link features, each clamped to [0, 1].
std::array<double, kLinkFeatures> link_features(const RlState& s, size_t link,
                                                const FeatureScales& sc);

struct RlAction {
    std::vector<double> next_hop_weights;
    mpc::LaserLevel laser = mpc::LaserLevel::Nominal;
    int hop = -1;           // link actually used, index into state.links
    bool failsafe = false;  // shield escalation; no admissible hop exists

    bool valid(size_t links) const;
    bool operator==(const RlAction&) const = default;
};

struct RewardWeights {
    double alpha_r = 1.0;
    double beta_r = 0.1;
    double gamma_r = 0.01;
    double delta_r = 100.0;

    void validate() const;
};

struct Transition {
    double skr_meas = 0.0;
    double skr_target = 1.0;
    double latency = 0.0;
    double carbon = 0.0;
    bool key_outage = false;
};

double reward(const Transition& tr, const RewardWeights& w);

// --- Shield ------------------------------------------------------------------

enum class Feature { KeyBuffer, LinkQuality, QueueDepth, NeighborLoad };
enum class Cmp { Less, LessEq, Greater, GreaterEq };
enum class Override { RouteClassical, Failsafe };

struct Predicate {
    Feature feature = Feature::KeyBuffer;
    Cmp cmp = Cmp::Less;
    double threshold = 0.0;

    bool holds(const LinkObservation& l) const;
};

// Applies to weighted key-bearing links when the head flow has the given
// class and every predicate holds for that link.
struct ShieldRule {
    std::string name;
    std::optional<net::TrafficClass> cls;
    std::vector<Predicate> all_of;
    Override action = Override::RouteClassical;
};

struct ShieldRuleSet {
    std::vector<ShieldRule> rules;
    bool has_canonical() const;
};

// IF key buffer < critical threshold AND class is Type-I THEN route via the
// classical link.
ShieldRule canonical_rule(double critical_threshold_bits);
ShieldRuleSet default_rules(double critical_threshold_bits);

struct ShieldResult {
    RlAction action;
    bool overridden = false;
    std::string rule;
};

// Moves weight off every link matched by a rule onto the classical link
// (the first non-key-bearing link). Without a classical link the action
// escalates to failsafe with all weights zero.
ShieldResult shield_filter(const RlState& s, const RlAction& proposed, const ShieldRuleSet& rules);

// --- Policy ------------------------------------------------------------------

enum class PolicyMode { Stochastic, Greedy };

struct Policy {
    std::array<double, kLinkFeatures> theta{};
    std::array<std::array<double, kLaserFeatures>, kLaserLevels> laser_theta{};
    FeatureScales scales;
    PolicyMode mode = PolicyMode::Stochastic;
};

std::vector<double> hop_probabilities(const Policy& p, const RlState& s);
std::array<double, kLaserLevels> laser_probabilities(const Policy& p, const RlState& s);

// Weights are the softmax over link scores (stochastic) or one-hot on the
// argmax (greedy); hop is sampled or the argmax accordingly.
RlAction policy_act(const Policy& p, const RlState& s, Rng& rng);

// --- Toy environment and training --------------------------------------------

// Five nodes: a source, two key-bearing relays with their own QKD buffers,
// one classical relay and the destination. Link quality follows a two-state
// Markov chain; a Type-I flow needs demand_bits of key per step.
struct ToyEnvConfig {
    double demand_bits = 100.0;
    double skr_good_bits = 160.0;
    double skr_bad_bits = 20.0;
    double p_good_to_bad = 0.05;
    double p_bad_to_good = 0.10;
    double buffer_cap_bits = 2000.0;
    double latency_keyed = 2.0;
    double latency_classical = 1.0;
    double carbon_keyed = 1.0;
    double carbon_turbo_extra = 2.0;
    int steps = 200;
};

class ToyEnv {
public:
    explicit ToyEnv(ToyEnvConfig cfg = {});
    RlState reset(Rng& rng);
    struct StepResult {
        RlState state;
        Transition tr;
        bool done = false;
    };
    StepResult step(const RlAction& a, Rng& rng);
    const ToyEnvConfig& config() const { return cfg_; }
    double critical_threshold() const { return 2.0 * cfg_.demand_bits; }

private:
    RlState observe() const;
    ToyEnvConfig cfg_;
    double buffer_[2] = {0.0, 0.0};
    bool good_[2] = {true, true};
    int t_ = 0;
};

struct TrainConfig {
    int episodes = 300;
    double learning_rate = 0.5;
    bool shield = true;
    uint64_t seed = 1;
};

struct LearningPoint {
    int episode = 0;
    double mean_return = 0.0;
    int outage_count = 0;
};

struct TrainResult {
    Policy policy;
    std::vector<LearningPoint> curve;
    int type_i_outages = 0;
};

struct EpisodeStats {
    double total_return = 0.0;
    int outages = 0;
    int shield_overrides = 0;
};

// One episode; the shield, when given, filters every action.
EpisodeStats run_episode(const Policy& p, ToyEnv& env, const RewardWeights& w,
                         const ShieldRuleSet* shield, Rng& rng);

// REINFORCE with the episode-mean return as baseline. Throws std::runtime_error if a
// return becomes non-finite.
TrainResult train(Policy initial, const ToyEnvConfig& env_cfg, const RewardWeights& w,
                  const TrainConfig& cfg);

// Learning curve as CSV: episode,mean_return,outage_count.
std::string learning_curve_csv(const std::vector<LearningPoint>& curve);

// --- Baseline ----------------------------------------------------------------

struct Route {
    std::vector<std::string> nodes;
    double latency_s = 0.0;
};

// Minimum-latency path over edges that are not down; equal latencies go to
// the lexicographically smaller node sequence. nullopt when disconnected.
std::optional<Route> baseline_shortest_path(const net::TimeVaryingGraph& g, const std::string& src,
                                            const std::string& dst);

} // namespace qntn::rl
