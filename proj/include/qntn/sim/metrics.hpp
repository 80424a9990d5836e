#pragma once

// Run summary computed from trace records only, so the online summary and
// an offline recomputation from the trace file agree bit for bit.

#include "qntn/sim/trace.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace qntn::sim {

inline constexpr int kMetricsFormatVersion = 1;

struct ObjectiveTerms {
    double secure_bits = 0.0;
    double demand_bits = 0.0;  // zero demand counts as fully secured
    double latency_s = 0.0;
    double carbon_g = 0.0;
    double availability = 1.0; // Type-I keyed fraction of the tick
};

struct ObjectiveWeightsView {
    double w1 = 0.0, w2 = 0.0, w3 = 0.0, w4 = 0.0, gamma = 1.0;
};

// sum_k gamma^k (w1 R_secure/R_demand - w2 L - w3 E_carbon + w4 A), one
// term per Tier-1 tick.
double objective_eval(const ObjectiveWeightsView& w, const std::vector<ObjectiveTerms>& ticks);

struct MetricsSummary {
    std::string config;
    std::string controller;
    uint64_t seed = 0;

    double secure_session_uptime_pct = 100.0;   // 100 when no Type-I session ran
    double type_i_active_s = 0.0;
    double carbon_g = 0.0;
    double delivered_bits = 0.0;
    std::optional<double> carbon_per_bit_g;     // undefined when nothing delivered

    int handovers = 0;
    int mbb_completed = 0;
    int mbb_aborted = 0;
    int hard_handovers = 0;
    double handover_downtime_s = 0.0;
    int jitter_samples = 0;
    std::optional<double> handover_jitter_max_ms;  // undefined without samples
    std::optional<double> handover_jitter_p99_ms;

    double key_generated_bits = 0.0;
    double key_consumed_bits = 0.0;
    double key_expired_bits = 0.0;
    std::optional<double> key_utilization_pct;  // undefined when nothing generated

    double objective_j = 0.0;
    int tier1_ticks = 0;

    long type_i_scheduled_steps = 0;
    long type_i_violations = 0;
    long type_i_outages = 0;
    long shield_overrides = 0;
    int fallback_transitions = 0;

    double type_i_latency_max_ms = 0.0;
    double type_ii_latency_max_ms = 0.0;
    bool type_i_slo_met = true;
    bool type_ii_slo_met = true;
};

MetricsSummary compute_metrics(const TraceFile& trace);

// Name/value pairs in a fixed order; undefined values are nullopt.
std::vector<std::pair<std::string, std::optional<double>>> metric_values(const MetricsSummary& m);

// Whether a larger value of the named metric is better.
bool higher_is_better(const std::string& metric);

// CSV with header metric,controller,seed,value; the first row carries
// format_version. Undefined values are written as "undefined".
std::string metrics_csv(const std::vector<MetricsSummary>& runs);
nlohmann::json metrics_json(const MetricsSummary& m);

// Nearest-rank percentile of a non-empty sample, p in (0, 100].
double percentile_nearest_rank(std::vector<double> v, double p);

} // namespace qntn::sim
