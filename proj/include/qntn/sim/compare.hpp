#pragma once

// Multi-seed comparison of controllers on one scenario.

#include "qntn/sim/config.hpp"
#include "qntn/sim/engine.hpp"
#include "qntn/sim/metrics.hpp"

#include <optional>
#include <string>
#include <vector>

namespace qntn::sim {

inline constexpr int kCompareFormatVersion = 1;

struct MetricStats {
    std::string metric;
    std::string controller;
    int n = 0;                  // seeds with a defined value
    std::optional<double> mean;
    std::optional<double> stddev;                   // sample, n - 1
    std::optional<double> relative_improvement_pct; // against the reference controller
};

struct CompareResult {
    std::vector<ControllerKind> controllers;
    std::vector<uint64_t> seeds;
    std::vector<MetricsSummary> runs;   // controller-major, then seed
    std::vector<std::string> trace_hashes;
    std::vector<MetricStats> stats;     // one row per (controller, metric)
};

// Runs every (controller, seed) pair on up to `threads` workers. Each run
// is independent, so the result does not depend on the thread count.
std::vector<RunResult> run_many(const SimConfig& cfg, const std::vector<ControllerKind>& controllers,
                                const std::vector<uint64_t>& seeds, unsigned threads = 0);

// Aggregates summaries; the last controller listed is the reference.
// Improvement is signed so that positive always means better.
std::vector<MetricStats> aggregate(const std::vector<MetricsSummary>& runs,
                                   const std::vector<ControllerKind>& controllers);

CompareResult compare(const SimConfig& cfg, const std::vector<ControllerKind>& controllers,
                      const std::vector<uint64_t>& seeds, unsigned threads = 0);

// Header metric,controller,n,mean,stddev,relative_improvement_pct; the
// first row carries format_version.
std::string compare_csv(const std::vector<MetricStats>& stats);

// Relative improvement of a over b in percent, signed by the metric's
// direction; undefined when b is zero.
std::optional<double> relative_improvement(const std::string& metric, double a, double b);

const MetricStats* find_stats(const std::vector<MetricStats>& s, const std::string& metric,
                              const std::string& controller);

} // namespace qntn::sim
