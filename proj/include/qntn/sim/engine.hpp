#pragma once

// Deterministic discrete-event run of one scenario under one controller.
//
// Time structure: Tier-2 steps (channel draws, key generation, Type-I key
// scheduling) nest inside geometry steps (orbit propagation, topology
// snapshot, routing, handovers, energy and carbon), which nest inside
// Tier-1 ticks (forecasts, contact planning, MPC, bulk deferral,
// telemetry and the per-tick control record).

#include "qntn/control_rl.hpp"
#include "qntn/sim/config.hpp"
#include "qntn/sim/metrics.hpp"

#include <optional>
#include <string>
#include <vector>

namespace qntn::sim {

struct RunOptions {
    ControllerKind controller = ControllerKind::Ai;
    uint64_t seed = 1;
    std::optional<bool> greedy;        // overrides control.rl.mode
    std::optional<double> duration_s;  // truncates the scenario
};

struct RunResult {
    std::string trace;
    std::string trace_hash;
    MetricsSummary summary;
    std::vector<rl::LearningPoint> learning_curve;  // empty unless a policy was trained
    rl::Policy policy;
};

RunResult run_simulation(const SimConfig& cfg, const RunOptions& opt);

// Weather intervals of the moving front for one seed's start offset. Each
// listed site sees turbulence from its arrival time, then cloud.
std::vector<net::WeatherInterval> front_intervals(const SimConfig& cfg, double start_offset_s);

// OGS whose key store the shortest-path baseline draws Type-I keys from:
// the one closest to the source by fiber latency, ties to the smaller id.
std::string nearest_key_store(const SimConfig& cfg, const std::string& src);

// The Tier-2 policy used by AI controllers: the configured weights, or
// REINFORCE on the toy environment with a fixed training seed.
rl::TrainResult tier2_policy(const SimConfig& cfg);

} // namespace qntn::sim
