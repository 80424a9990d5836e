#pragma once

// Link-level protocols: make-before-break handover, FSO/RF fallback, QKD
// turbo trigger and entanglement-swap scheduling against memory TTL.

#include "qntn/channel.hpp"
#include "qntn/sdqn.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace qntn::proto {

// --- Make-before-break handover ----------------------------------------------

enum class Phase { Idle, Predicted, PreEstablishing, BufferSync, StateTransferred, Switched, TornDown };
enum class MbbEvent {
    Predict,           // handover horizon reached
    BeginPreEstablish, // point incoming terminal, start entanglement/QKD
    TrackingAcquired,  // incoming link up, keys accumulating
    TransferState,     // copy session checkpoint over the ISL
    SoftSwitch,        // atomic flow-table swap
    Teardown,          // release outgoing link
    IncomingFailed,
    OutgoingLost,
};

inline constexpr int kPhaseCount = 7;
inline constexpr int kMbbEventCount = 8;

const char* to_string(Phase p);
const char* to_string(MbbEvent e);

struct SessionCheckpoint {
    uint64_t packets = 0;
    uint64_t iv_counter = 0;
    bool operator==(const SessionCheckpoint&) const = default;
};

struct HandoverSession {
    std::string flow_id;
    std::string outgoing_sat;
    std::string incoming_sat;
    std::string outgoing_link;
    std::string incoming_link;
    Phase phase = Phase::Idle;
    SessionCheckpoint state;
    std::optional<SessionCheckpoint> transferred;
    std::array<double, kPhaseCount> phase_time{}; // time each phase was entered; NaN if not
    double transfer_ready_at = 0.0;               // checkpoint arrival at the incoming sat
    double jitter_s = 0.0;
    double downtime_s = 0.0;
    bool aborted = false;
    bool outgoing_lost = false;

    HandoverSession();
    bool entered(Phase p) const;
};

struct MbbContext {
    double t = 0.0;
    double incoming_buffer_bits = 0.0;
    double switch_threshold_bits = 0.0;      // one second of the flow's key demand
    double isl_distance_km = 0.0;
    double serialization_delay_s = 1e-4;
    double old_path_latency_s = 0.0;
    double new_path_latency_s = 0.0;
    sdqn::FlowTable* table = nullptr;        // required for SoftSwitch
    const net::TimeVaryingGraph* graph = nullptr;
    sdqn::FlowTableEntry new_entry;
};

struct MbbResult {
    HandoverSession session;
    bool accepted = false;
    std::string reason;
};

// Phases only advance in order. Illegal events are rejected with the
// session unchanged. Failure of the incoming link before the switch aborts
// to Idle with the outgoing link still carrying the flow.
MbbResult mbb_step(const HandoverSession& s, MbbEvent e, const MbbContext& ctx);

// --- FSO / RF fallback -------------------------------------------------------

enum class LinkMode { FsoOk, RfFallback, Failsafe };
const char* to_string(LinkMode m);

struct FallbackState {
    std::string link_id;
    LinkMode mode = LinkMode::FsoOk;
    double entered_at = 0.0;
    double buffered_key_at_entry = 0.0;
    double recovering_since = -1.0;
};

struct LinkObservables {
    double t = 0.0;
    double qber = 0.0;
    bool beacon = true;
    double snr_db = 0.0;
    double key_buffer_bits = 0.0;
    double type_i_demand_per_tick_bits = 0.0;
};

struct FallbackConfig {
    double qber_trigger = 0.11;
    double snr_threshold_db = 0.0;
    double hysteresis_db = 3.0;
    double dwell_s = 1.0;
};

bool fallback_trigger(const LinkObservables& o, const FallbackConfig& cfg);

// FSO_OK -> RF_FALLBACK on a BER spike or beacon loss; RF_FALLBACK ->
// FAILSAFE once the buffer holds less than one tick of Type-I demand; back
// to FSO_OK after the SNR has stayed above threshold + hysteresis for the
// dwell time.
FallbackState fallback_step(const FallbackState& s, const LinkObservables& o,
                            const FallbackConfig& cfg);

// --- Turbo mode --------------------------------------------------------------

struct TurboConfig {
    double window_s = 1.0;
    double clear_margin = 1.2;
};

struct TurboState {
    bool active = false;
    double over_since = -1.0;
};

// Activates when consumption has exceeded the SKR for a full window; clears
// when SKR exceeds consumption times the margin.
TurboState turbo_step(const TurboState& s, double t, double consumption_bps, double skr_bps,
                      const TurboConfig& cfg);

// --- Entanglement swapping ---------------------------------------------------

struct EntangledPair {
    uint64_t pair_id = 0;
    std::string link;
    double created_at = 0.0;
};

struct SwapSchedule {
    EntangledPair pair_a;
    EntangledPair pair_b;
    double measurement_time = 0.0;
    double fidelity_estimate = 0.0;
    EntangledPair end_to_end;
};

struct RejectedTtl {
    std::string reason;
};

// Earliest measurement at or after t_now and both creation times. The
// end-to-end fidelity estimate is the product of the two stored-pair
// fidelities; rejected if a pair outlived the TTL or the estimate < F_min.
std::variant<SwapSchedule, RejectedTtl> schedule_swap(const EntangledPair& a,
                                                      const EntangledPair& b, double t_now,
                                                      const channel::QuantumMemorySpec& mem);

class QuantumMemory {
public:
    explicit QuantumMemory(channel::QuantumMemorySpec spec) : spec_(spec) { spec_.validate(); }

    // False when every slot is taken.
    bool store(const EntangledPair& p);
    bool contains(uint64_t pair_id) const;
    size_t used() const { return slots_.size(); }
    const channel::QuantumMemorySpec& spec() const { return spec_; }
    // Drops pairs older than the TTL; returns how many were dropped.
    int evict_expired(double t);
    // Consumes both pairs of a schedule; throws if either is absent.
    EntangledPair execute(const SwapSchedule& s);

    uint64_t consumed() const { return consumed_; }
    uint64_t produced() const { return produced_; }

private:
    channel::QuantumMemorySpec spec_;
    std::vector<EntangledPair> slots_;
    uint64_t consumed_ = 0;
    uint64_t produced_ = 0;
};

} // namespace qntn::proto
