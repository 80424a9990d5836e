#include "qntn/sim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace qntn::sim {

using nlohmann::json;

double objective_eval(const ObjectiveWeightsView& w, const std::vector<ObjectiveTerms>& ticks) {
    double j = 0.0;
    double discount = 1.0;
    for (const auto& k : ticks) {
        const double ratio = k.demand_bits > 0.0 ? k.secure_bits / k.demand_bits : 1.0;
        const double term = w.w1 * ratio - w.w2 * k.latency_s - w.w3 * k.carbon_g +
                            w.w4 * k.availability;
        j += discount * term;
        discount *= w.gamma;
    }
    return j;
}

double percentile_nearest_rank(std::vector<double> v, double p) {
    if (v.empty() || !(p > 0.0 && p <= 100.0)) {
        throw std::invalid_argument("percentile_nearest_rank: empty sample or bad p");
    }
    std::sort(v.begin(), v.end());
    const auto rank = static_cast<size_t>(std::ceil(p / 100.0 * static_cast<double>(v.size())));
    return v[std::max<size_t>(rank, 1) - 1];
}

namespace {

double num(const json& r, const char* k) {
    auto it = r.find(k);
    return it != r.end() && it->is_number() ? it->get<double>() : 0.0;
}

long count(const json& r, const char* k) {
    auto it = r.find(k);
    return it != r.end() && it->is_number() ? it->get<long>() : 0;
}

} // namespace

MetricsSummary compute_metrics(const TraceFile& trace) {
    MetricsSummary m;
    const json& h = trace.header;
    m.config = h.value("config", "");
    m.controller = h.value("controller", "");
    m.seed = h.value("seed", uint64_t{0});
    ObjectiveWeightsView w;
    if (h.contains("objective")) {
        const auto& o = h["objective"];
        w = {num(o, "w1"), num(o, "w2"), num(o, "w3"), num(o, "w4"), num(o, "gamma")};
    }

    std::vector<ObjectiveTerms> ticks;
    std::vector<double> jitter_ms;
    double keyed_s = 0.0;
    double type_i_latency = 0.0;
    double type_ii_latency = 0.0;
    double type_i_target = 1e-3;
    double type_ii_target = 50e-3;
    if (h.contains("slo")) {
        type_i_target = num(h["slo"], "type_i_latency_s");
        type_ii_target = num(h["slo"], "type_ii_latency_s");
    }

    for (const auto& r : trace.records) {
        const std::string cat = r["cat"].get<std::string>();
        const std::string type = r["type"].get<std::string>();
        if (cat == "control" && type == "tick") {
            ObjectiveTerms k;
            k.secure_bits = num(r, "secure_bits");
            k.demand_bits = num(r, "demand_bits");
            k.latency_s = num(r, "latency_s");
            k.carbon_g = num(r, "carbon_g");
            k.availability = num(r, "availability");
            ticks.push_back(k);
            m.carbon_g += k.carbon_g;
            m.delivered_bits += num(r, "delivered_bits");
            m.type_i_active_s += num(r, "type_i_active_s");
            keyed_s += num(r, "type_i_keyed_s");
            m.key_generated_bits += num(r, "key_generated_bits");
            m.key_consumed_bits += num(r, "key_consumed_bits");
            m.key_expired_bits += num(r, "key_expired_bits");
            m.type_i_scheduled_steps += count(r, "type_i_scheduled_steps");
            m.type_i_violations += count(r, "type_i_violations");
            m.type_i_outages += count(r, "type_i_outages");
            m.shield_overrides += count(r, "shield_overrides");
            type_i_latency = std::max(type_i_latency, num(r, "type_i_latency_max_s"));
            type_ii_latency = std::max(type_ii_latency, num(r, "type_ii_latency_max_s"));
        } else if (cat == "handover" && type == "completed") {
            ++m.handovers;
            if (r.value("mbb", false)) {
                ++m.mbb_completed;
            } else {
                ++m.hard_handovers;
            }
            m.handover_downtime_s += num(r, "downtime_s");
            jitter_ms.push_back(num(r, "jitter_ms"));
        } else if (cat == "handover" && type == "aborted") {
            ++m.mbb_aborted;
        } else if (cat == "fallback" && type == "transition") {
            ++m.fallback_transitions;
        }
    }

    m.tier1_ticks = static_cast<int>(ticks.size());
    m.objective_j = objective_eval(w, ticks);
    if (m.type_i_active_s > 0.0) {
        m.secure_session_uptime_pct = 100.0 * keyed_s / m.type_i_active_s;
    }
    if (m.delivered_bits > 0.0) {
        m.carbon_per_bit_g = m.carbon_g / m.delivered_bits;
    }
    m.jitter_samples = static_cast<int>(jitter_ms.size());
    if (!jitter_ms.empty()) {
        m.handover_jitter_max_ms = *std::max_element(jitter_ms.begin(), jitter_ms.end());
        m.handover_jitter_p99_ms = percentile_nearest_rank(jitter_ms, 99.0);
    }
    if (m.key_generated_bits > 0.0) {
        m.key_utilization_pct = 100.0 * m.key_consumed_bits / m.key_generated_bits;
    }
    m.type_i_latency_max_ms = type_i_latency * 1e3;
    m.type_ii_latency_max_ms = type_ii_latency * 1e3;
    m.type_i_slo_met = type_i_latency <= type_i_target;
    m.type_ii_slo_met = type_ii_latency <= type_ii_target;
    return m;
}

std::vector<std::pair<std::string, std::optional<double>>> metric_values(const MetricsSummary& m) {
    auto b = [](bool v) { return std::optional<double>(v ? 1.0 : 0.0); };
    auto d = [](double v) { return std::optional<double>(v); };
    return {
        {"secure_session_uptime_pct", d(m.secure_session_uptime_pct)},
        {"type_i_active_s", d(m.type_i_active_s)},
        {"carbon_g", d(m.carbon_g)},
        {"delivered_bits", d(m.delivered_bits)},
        {"carbon_per_bit_g", m.carbon_per_bit_g},
        {"handovers", d(m.handovers)},
        {"mbb_completed", d(m.mbb_completed)},
        {"mbb_aborted", d(m.mbb_aborted)},
        {"hard_handovers", d(m.hard_handovers)},
        {"handover_downtime_s", d(m.handover_downtime_s)},
        {"handover_jitter_samples", d(m.jitter_samples)},
        {"handover_jitter_max_ms", m.handover_jitter_max_ms},
        {"handover_jitter_p99_ms", m.handover_jitter_p99_ms},
        {"key_generated_bits", d(m.key_generated_bits)},
        {"key_consumed_bits", d(m.key_consumed_bits)},
        {"key_expired_bits", d(m.key_expired_bits)},
        {"key_utilization_pct", m.key_utilization_pct},
        {"objective_j", d(m.objective_j)},
        {"tier1_ticks", d(m.tier1_ticks)},
        {"type_i_scheduled_steps", d(static_cast<double>(m.type_i_scheduled_steps))},
        {"type_i_violations", d(static_cast<double>(m.type_i_violations))},
        {"type_i_outages", d(static_cast<double>(m.type_i_outages))},
        {"shield_overrides", d(static_cast<double>(m.shield_overrides))},
        {"fallback_transitions", d(m.fallback_transitions)},
        {"type_i_latency_max_ms", d(m.type_i_latency_max_ms)},
        {"type_ii_latency_max_ms", d(m.type_ii_latency_max_ms)},
        {"type_i_slo_met", b(m.type_i_slo_met)},
        {"type_ii_slo_met", b(m.type_ii_slo_met)},
    };
}

bool higher_is_better(const std::string& metric) {
    static const char* lower[] = {"carbon_g",
                                  "carbon_per_bit_g",
                                  "mbb_aborted",
                                  "hard_handovers",
                                  "handover_downtime_s",
                                  "handover_jitter_max_ms",
                                  "handover_jitter_p99_ms",
                                  "key_expired_bits",
                                  "type_i_violations",
                                  "type_i_outages",
                                  "shield_overrides",
                                  "fallback_transitions",
                                  "type_i_latency_max_ms",
                                  "type_ii_latency_max_ms"};
    return std::none_of(std::begin(lower), std::end(lower),
                        [&](const char* s) { return metric == s; });
}

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

} // namespace

std::string metrics_csv(const std::vector<MetricsSummary>& runs) {
    std::ostringstream os;
    os << "metric,controller,seed,value\n";
    os << "format_version,,," << kMetricsFormatVersion << "\n";
    for (const auto& m : runs) {
        for (const auto& [name, v] : metric_values(m)) {
            os << name << ',' << m.controller << ',' << m.seed << ','
               << (v ? fmt(*v) : std::string("undefined")) << '\n';
        }
    }
    return os.str();
}

json metrics_json(const MetricsSummary& m) {
    json j;
    j["format_version"] = kMetricsFormatVersion;
    j["config"] = m.config;
    j["controller"] = m.controller;
    j["seed"] = m.seed;
    json vals = json::object();
    for (const auto& [name, v] : metric_values(m)) {
        vals[name] = v ? json(*v) : json(nullptr);
    }
    j["metrics"] = vals;
    return j;
}

} // namespace qntn::sim
