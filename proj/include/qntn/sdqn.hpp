#pragma once

// Controller data plane: telemetry records with the YANG-extension field
// names, intent translation, flow tables and the key-management ledger.

#include "qntn/netmodel.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace qntn::sdqn {

inline constexpr int kTelemetryFormatVersion = 1;
inline constexpr double kKeyBlockBits = 256.0;

struct TelemetryRecord {
    std::string node_id;
    double t = 0.0;
    std::map<std::string, double> quantum_link_fidelity;   // link id -> [0, 1]
    std::map<std::string, double> key_buffer_fill_level;   // peer id -> bits
    double turbulence_forecast_index = 0.0;
    double carbon_intensity_source = 0.0;                  // gCO2/kWh
    double battery_state_of_charge = 100.0;                // percent

    bool operator==(const TelemetryRecord&) const = default;
};

// One line of JSON; keys use the hyphenated YANG names.
std::string serialize(const TelemetryRecord& r);
TelemetryRecord parse_telemetry(const std::string& line);

struct TelemetryContext {
    double t = 0.0;
    // Edges whose endpoints report a fidelity.
    const std::vector<net::EdgeState>* edges = nullptr;
    std::function<double(const std::string& node)> turbulence_index;
    std::function<double(const std::string& node)> carbon_intensity;
};

// Link fidelity reported for a QKD link: 1 - 2 QBER, clamped to [0, 1].
double link_fidelity_from_qber(double qber);

std::vector<TelemetryRecord> collect_telemetry(const std::vector<net::NodeState>& nodes,
                                               const TelemetryContext& ctx);

// --- Intents -----------------------------------------------------------------

struct Intent {
    std::string intent_id;
    std::string src;
    std::string dst;
    net::TrafficClass cls = net::TrafficClass::TypeI;
    net::SecurityMode security = net::SecurityMode::Otp;
    int priority = 0;
    std::set<std::string> forbidden_regions;
};

struct Policy {
    std::string intent_id;
    std::vector<std::vector<std::string>> candidate_paths; // sorted by latency
    net::SecurityMode security = net::SecurityMode::Otp;
    bool otp_key_continuity = false;
    bool zero_key_consumption = false;
    bool pqc = false;
};

struct InfeasibleIntent {
    std::string intent_id;
    std::string reason;
};

// Minimum acceptable security mode for a class.
net::SecurityMode minimum_security(net::TrafficClass cls);

// Enumerates simple paths (up to max_hops) that avoid forbidden regions.
std::variant<Policy, InfeasibleIntent>
translate_intent(const Intent& intent, const net::TimeVaryingGraph& graph,
                 const std::function<std::string(const std::string&)>& region_of,
                 int max_hops = 6, size_t max_paths = 8);

// --- Flow tables -------------------------------------------------------------

struct FlowTableEntry {
    std::string flow_id;
    std::vector<std::string> path;
    std::string key_source_link;
    bool active = false;
    double installed_at = 0.0;

    bool operator==(const FlowTableEntry&) const = default;
};

bool path_valid(const std::vector<std::string>& path, const net::TimeVaryingGraph& graph);

class FlowTable {
public:
    // Atomically activates entry and deactivates the previous active entry
    // for the same flow. Invalid paths leave the table untouched.
    bool install_flow(FlowTableEntry entry, const net::TimeVaryingGraph& graph);
    // Removes the flow's active entry (flow finished).
    void retire(const std::string& flow_id);

    const FlowTableEntry* active(const std::string& flow_id) const;
    size_t active_count(const std::string& flow_id) const;
    const std::vector<FlowTableEntry>& entries() const { return entries_; }
    uint64_t digest() const;

private:
    std::vector<FlowTableEntry> entries_;
    std::map<std::string, size_t> active_;
};

// --- Key management ledger ---------------------------------------------------

enum class KeyState : uint8_t { Generated, Stored, Consumed, Expired };
const char* to_string(KeyState s);

struct KmsLedgerEntry {
    uint64_t key_block_id = 0;
    std::string link;
    double bits = kKeyBlockBits;
    KeyState state = KeyState::Generated;
    double t_generated = 0.0;
    double t_final = 0.0;
};

class IllegalTransition : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// generated -> stored -> {consumed | expired}; timestamps never decrease.
KmsLedgerEntry kml_transition(const KmsLedgerEntry& entry, KeyState next, double t);

struct LedgerTotals {
    double generated = 0.0;
    double stored = 0.0;
    double consumed = 0.0;
    double expired = 0.0;
};

// Block ledger with a FIFO store per link. Entries are kept compactly;
// totals are exact multiples of the block size.
class KmsLedger {
public:
    explicit KmsLedger(double block_bits = kKeyBlockBits) : block_bits_(block_bits) {}

    // Adds generated bits to a link; whole blocks become stored. Returns the
    // number of blocks created.
    int generate(const std::string& link, double bits, double t);
    // Consumes whole blocks from the front of a link's store.
    int consume(const std::string& link, int blocks, double t);
    // Expires stored blocks older than shelf_life_s.
    int expire_older_than(const std::string& link, double shelf_life_s, double t);
    int expire_all(const std::string& link, double t);

    double stored_bits(const std::string& link) const;
    int stored_blocks(const std::string& link) const;
    double block_bits() const { return block_bits_; }

    KmsLedgerEntry entry(uint64_t id) const;
    size_t size() const { return blocks_.size(); }
    LedgerTotals totals(const std::string& link) const;
    LedgerTotals totals() const;
    std::vector<std::string> links() const;

    // consumed / generated, or nullopt when nothing was generated.
    std::optional<double> utilization() const;

private:
    struct Block {
        uint32_t link = 0;
        KeyState state = KeyState::Generated;
        double t_generated = 0.0;
        double t_final = 0.0;
    };
    struct LinkStore {
        double fractional = 0.0;
        std::deque<uint64_t> fifo;
        LedgerTotals totals;
    };
    uint32_t link_index(const std::string& link);
    void advance(uint64_t id, KeyState next, double t);

    double block_bits_;
    std::vector<Block> blocks_;
    std::vector<std::string> link_names_;
    std::map<std::string, uint32_t> link_ids_;
    std::vector<LinkStore> stores_;
};

} // namespace qntn::sdqn
