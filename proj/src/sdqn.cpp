#include "qntn/sdqn.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>

namespace qntn::sdqn {

using nlohmann::json;

std::string serialize(const TelemetryRecord& r) {
    json j;
    j["format_version"] = kTelemetryFormatVersion;
    j["node-id"] = r.node_id;
    j["timestamp"] = r.t;
    j["quantum-link-fidelity"] = r.quantum_link_fidelity;
    j["key-buffer-fill-level"] = r.key_buffer_fill_level;
    j["turbulence-forecast-index"] = r.turbulence_forecast_index;
    j["carbon-intensity-source"] = r.carbon_intensity_source;
    j["battery-state-of-charge"] = r.battery_state_of_charge;
    return j.dump();
}

TelemetryRecord parse_telemetry(const std::string& line) {
    const json j = json::parse(line);
    if (j.at("format_version").get<int>() != kTelemetryFormatVersion) {
        throw std::invalid_argument("unsupported telemetry format_version");
    }
    TelemetryRecord r;
    r.node_id = j.at("node-id").get<std::string>();
    r.t = j.at("timestamp").get<double>();
    r.quantum_link_fidelity = j.at("quantum-link-fidelity").get<std::map<std::string, double>>();
    r.key_buffer_fill_level = j.at("key-buffer-fill-level").get<std::map<std::string, double>>();
    r.turbulence_forecast_index = j.at("turbulence-forecast-index").get<double>();
    r.carbon_intensity_source = j.at("carbon-intensity-source").get<double>();
    r.battery_state_of_charge = j.at("battery-state-of-charge").get<double>();
    return r;
}

double link_fidelity_from_qber(double qber) { return std::clamp(1.0 - 2.0 * qber, 0.0, 1.0); }

std::vector<TelemetryRecord> collect_telemetry(const std::vector<net::NodeState>& nodes,
                                               const TelemetryContext& ctx) {
    std::vector<TelemetryRecord> out;
    out.reserve(nodes.size());
    for (const auto& n : nodes) {
        TelemetryRecord r;
        r.node_id = n.node_id;
        r.t = ctx.t;
        r.key_buffer_fill_level = n.key_buffers;
        if (ctx.edges != nullptr) {
            for (const auto& e : *ctx.edges) {
                if ((e.a == n.node_id || e.b == n.node_id) && e.sample) {
                    r.quantum_link_fidelity[e.edge_id] = link_fidelity_from_qber(e.sample->qber);
                }
            }
        }
        r.turbulence_forecast_index = ctx.turbulence_index ? ctx.turbulence_index(n.node_id) : 0.0;
        r.carbon_intensity_source = ctx.carbon_intensity ? ctx.carbon_intensity(n.node_id) : 0.0;
        r.battery_state_of_charge =
            n.battery_capacity_wh > 0.0 ? 100.0 * n.battery_soc_wh / n.battery_capacity_wh : 100.0;
        out.push_back(std::move(r));
    }
    return out;
}

// --- Intents -----------------------------------------------------------------

namespace {
int security_rank(net::SecurityMode m) {
    switch (m) {
    case net::SecurityMode::Pqc: return 0;
    case net::SecurityMode::Aes128Batch: return 1;
    case net::SecurityMode::Aes256Rekey: return 2;
    case net::SecurityMode::Otp: return 3;
    }
    return 0;
}
} // namespace

net::SecurityMode minimum_security(net::TrafficClass cls) { return net::class_spec(cls).security; }

std::variant<Policy, InfeasibleIntent>
translate_intent(const Intent& intent, const net::TimeVaryingGraph& graph,
                 const std::function<std::string(const std::string&)>& region_of, int max_hops,
                 size_t max_paths) {
    if (!graph.has_node(intent.src) || !graph.has_node(intent.dst)) {
        return InfeasibleIntent{intent.intent_id, "endpoint missing from graph"};
    }
    Policy p;
    p.intent_id = intent.intent_id;
    const auto floor_mode = minimum_security(intent.cls);
    p.security = security_rank(intent.security) >= security_rank(floor_mode) ? intent.security
                                                                              : floor_mode;
    p.otp_key_continuity = intent.cls == net::TrafficClass::TypeI;
    p.zero_key_consumption = p.security == net::SecurityMode::Pqc;
    p.pqc = p.zero_key_consumption;

    auto forbidden = [&](const std::string& node) {
        return !intent.forbidden_regions.empty() &&
               intent.forbidden_regions.count(region_of(node)) > 0;
    };
    if (forbidden(intent.src) || forbidden(intent.dst)) {
        return InfeasibleIntent{intent.intent_id, "endpoint lies in a forbidden region"};
    }
    if (intent.src == intent.dst) {
        p.candidate_paths.push_back({intent.src});
        return p;
    }

    std::vector<std::pair<double, std::vector<std::string>>> found;
    std::vector<std::string> path{intent.src};
    std::function<void(double)> dfs = [&](double latency) {
        const std::string here = path.back();
        if (here == intent.dst) {
            found.emplace_back(latency, path);
            return;
        }
        if (static_cast<int>(path.size()) > max_hops) {
            return;
        }
        for (const auto* e : graph.incident(here)) {
            const std::string& next = e->other(here);
            if (std::find(path.begin(), path.end(), next) != path.end() || forbidden(next)) {
                continue;
            }
            path.push_back(next);
            dfs(latency + e->latency_s);
            path.pop_back();
        }
    };
    dfs(0.0);
    if (found.empty()) {
        return InfeasibleIntent{intent.intent_id, "no residency-legal path"};
    }
    std::sort(found.begin(), found.end());
    for (size_t i = 0; i < found.size() && i < max_paths; ++i) {
        p.candidate_paths.push_back(std::move(found[i].second));
    }
    return p;
}

// --- Flow tables -------------------------------------------------------------

bool path_valid(const std::vector<std::string>& path, const net::TimeVaryingGraph& graph) {
    if (path.empty()) {
        return false;
    }
    for (const auto& n : path) {
        if (!graph.has_node(n)) {
            return false;
        }
    }
    for (size_t i = 1; i < path.size(); ++i) {
        if (graph.edge_between(path[i - 1], path[i]) == nullptr) {
            return false;
        }
    }
    return true;
}

bool FlowTable::install_flow(FlowTableEntry entry, const net::TimeVaryingGraph& graph) {
    if (!path_valid(entry.path, graph)) {
        return false;
    }
    entry.active = true;
    auto it = active_.find(entry.flow_id);
    if (it != active_.end()) {
        entries_[it->second].active = false;
    }
    active_[entry.flow_id] = entries_.size();
    entries_.push_back(std::move(entry));
    return true;
}

void FlowTable::retire(const std::string& flow_id) {
    auto it = active_.find(flow_id);
    if (it != active_.end()) {
        entries_[it->second].active = false;
        active_.erase(it);
    }
}

const FlowTableEntry* FlowTable::active(const std::string& flow_id) const {
    auto it = active_.find(flow_id);
    return it == active_.end() ? nullptr : &entries_[it->second];
}

size_t FlowTable::active_count(const std::string& flow_id) const {
    return static_cast<size_t>(std::count_if(entries_.begin(), entries_.end(), [&](const auto& e) {
        return e.flow_id == flow_id && e.active;
    }));
}

uint64_t FlowTable::digest() const {
    uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* data, size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    };
    auto mix_str = [&](const std::string& s) {
        mix(s.data(), s.size());
        mix("\0", 1);
    };
    for (const auto& e : entries_) {
        mix_str(e.flow_id);
        for (const auto& n : e.path) {
            mix_str(n);
        }
        mix_str(e.key_source_link);
        mix(&e.active, sizeof e.active);
        mix(&e.installed_at, sizeof e.installed_at);
    }
    return h;
}

// --- Ledger ------------------------------------------------------------------

const char* to_string(KeyState s) {
    switch (s) {
    case KeyState::Generated: return "generated";
    case KeyState::Stored: return "stored";
    case KeyState::Consumed: return "consumed";
    case KeyState::Expired: return "expired";
    }
    return "?";
}

KmsLedgerEntry kml_transition(const KmsLedgerEntry& entry, KeyState next, double t) {
    const bool legal = (entry.state == KeyState::Generated && next == KeyState::Stored) ||
                       (entry.state == KeyState::Stored &&
                        (next == KeyState::Consumed || next == KeyState::Expired));
    if (!legal) {
        throw IllegalTransition(std::string("illegal key transition ") + to_string(entry.state) +
                                " -> " + to_string(next));
    }
    if (t < entry.t_generated || t < entry.t_final) {
        throw IllegalTransition("key transition timestamp moves backwards");
    }
    KmsLedgerEntry out = entry;
    out.state = next;
    out.t_final = t;
    return out;
}

uint32_t KmsLedger::link_index(const std::string& link) {
    auto it = link_ids_.find(link);
    if (it != link_ids_.end()) {
        return it->second;
    }
    const auto id = static_cast<uint32_t>(link_names_.size());
    link_ids_[link] = id;
    link_names_.push_back(link);
    stores_.emplace_back();
    return id;
}

void KmsLedger::advance(uint64_t id, KeyState next, double t) {
    Block& b = blocks_[id];
    KmsLedgerEntry e{id, {}, block_bits_, b.state, b.t_generated, b.t_final};
    const KmsLedgerEntry moved = kml_transition(e, next, t);
    b.state = moved.state;
    b.t_final = moved.t_final;
}

int KmsLedger::generate(const std::string& link, double bits, double t) {
    if (bits < 0.0) {
        throw std::invalid_argument("KmsLedger::generate: negative bits");
    }
    const uint32_t li = link_index(link);
    LinkStore& s = stores_[li];
    s.fractional += bits;
    const int n = static_cast<int>(std::floor(s.fractional / block_bits_));
    s.fractional -= n * block_bits_;
    for (int i = 0; i < n; ++i) {
        const uint64_t id = blocks_.size();
        blocks_.push_back(Block{li, KeyState::Generated, t, t});
        advance(id, KeyState::Stored, t);
        s.fifo.push_back(id);
    }
    s.totals.generated += n * block_bits_;
    s.totals.stored += n * block_bits_;
    return n;
}

int KmsLedger::consume(const std::string& link, int blocks, double t) {
    auto it = link_ids_.find(link);
    if (it == link_ids_.end() || blocks <= 0) {
        return 0;
    }
    LinkStore& s = stores_[it->second];
    int n = 0;
    while (n < blocks && !s.fifo.empty()) {
        advance(s.fifo.front(), KeyState::Consumed, t);
        s.fifo.pop_front();
        ++n;
    }
    s.totals.consumed += n * block_bits_;
    s.totals.stored -= n * block_bits_;
    return n;
}

int KmsLedger::expire_older_than(const std::string& link, double shelf_life_s, double t) {
    auto it = link_ids_.find(link);
    if (it == link_ids_.end()) {
        return 0;
    }
    LinkStore& s = stores_[it->second];
    int n = 0;
    while (!s.fifo.empty() && t - blocks_[s.fifo.front()].t_generated > shelf_life_s) {
        advance(s.fifo.front(), KeyState::Expired, t);
        s.fifo.pop_front();
        ++n;
    }
    s.totals.expired += n * block_bits_;
    s.totals.stored -= n * block_bits_;
    return n;
}

int KmsLedger::expire_all(const std::string& link, double t) {
    return expire_older_than(link, -1.0, t);
}

double KmsLedger::stored_bits(const std::string& link) const {
    return stored_blocks(link) * block_bits_;
}

int KmsLedger::stored_blocks(const std::string& link) const {
    auto it = link_ids_.find(link);
    return it == link_ids_.end() ? 0 : static_cast<int>(stores_[it->second].fifo.size());
}

KmsLedgerEntry KmsLedger::entry(uint64_t id) const {
    const Block& b = blocks_.at(id);
    return KmsLedgerEntry{id, link_names_[b.link], block_bits_, b.state, b.t_generated, b.t_final};
}

LedgerTotals KmsLedger::totals(const std::string& link) const {
    auto it = link_ids_.find(link);
    return it == link_ids_.end() ? LedgerTotals{} : stores_[it->second].totals;
}

LedgerTotals KmsLedger::totals() const {
    LedgerTotals t;
    for (const auto& s : stores_) {
        t.generated += s.totals.generated;
        t.stored += s.totals.stored;
        t.consumed += s.totals.consumed;
        t.expired += s.totals.expired;
    }
    return t;
}

std::vector<std::string> KmsLedger::links() const { return link_names_; }

std::optional<double> KmsLedger::utilization() const {
    const LedgerTotals t = totals();
    if (t.generated <= 0.0) {
        return std::nullopt;
    }
    return t.consumed / t.generated;
}

} // namespace qntn::sdqn
