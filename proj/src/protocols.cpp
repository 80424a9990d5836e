#include "qntn/protocols.hpp"

#include "qntn/orbits.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace qntn::proto {

const char* to_string(Phase p) {
    switch (p) {
    case Phase::Idle: return "idle";
    case Phase::Predicted: return "predicted";
    case Phase::PreEstablishing: return "pre_establishing";
    case Phase::BufferSync: return "buffer_sync";
    case Phase::StateTransferred: return "state_transferred";
    case Phase::Switched: return "switched";
    case Phase::TornDown: return "torn_down";
    }
    return "?";
}

const char* to_string(MbbEvent e) {
    switch (e) {
    case MbbEvent::Predict: return "predict";
    case MbbEvent::BeginPreEstablish: return "begin_pre_establish";
    case MbbEvent::TrackingAcquired: return "tracking_acquired";
    case MbbEvent::TransferState: return "transfer_state";
    case MbbEvent::SoftSwitch: return "soft_switch";
    case MbbEvent::Teardown: return "teardown";
    case MbbEvent::IncomingFailed: return "incoming_failed";
    case MbbEvent::OutgoingLost: return "outgoing_lost";
    }
    return "?";
}

HandoverSession::HandoverSession() { phase_time.fill(std::numeric_limits<double>::quiet_NaN()); }

bool HandoverSession::entered(Phase p) const { return !std::isnan(phase_time[size_t(p)]); }

namespace {

MbbResult reject(const HandoverSession& s, std::string why) { return MbbResult{s, false, std::move(why)}; }

MbbResult advance(HandoverSession s, Phase next, double t) {
    s.phase = next;
    s.phase_time[size_t(next)] = t;
    return MbbResult{std::move(s), true, {}};
}

bool pre_switch(Phase p) {
    return p == Phase::Predicted || p == Phase::PreEstablishing || p == Phase::BufferSync ||
           p == Phase::StateTransferred;
}

} // namespace

MbbResult mbb_step(const HandoverSession& s, MbbEvent e, const MbbContext& ctx) {
    const auto illegal = [&] {
        return reject(s, std::string("event ") + to_string(e) + " illegal in phase " + to_string(s.phase));
    };
    switch (e) {
    case MbbEvent::Predict:
        if (s.phase != Phase::Idle) {
            return illegal();
        }
        {
            HandoverSession n = s;
            n.phase_time.fill(std::numeric_limits<double>::quiet_NaN());
            n.phase_time[size_t(Phase::Idle)] = s.phase_time[size_t(Phase::Idle)];
            n.aborted = false;
            n.outgoing_lost = false;
            n.transferred.reset();
            return advance(std::move(n), Phase::Predicted, ctx.t);
        }
    case MbbEvent::BeginPreEstablish:
        return s.phase == Phase::Predicted ? advance(s, Phase::PreEstablishing, ctx.t) : illegal();
    case MbbEvent::TrackingAcquired:
        return s.phase == Phase::PreEstablishing ? advance(s, Phase::BufferSync, ctx.t) : illegal();
    case MbbEvent::TransferState: {
        if (s.phase != Phase::BufferSync) {
            return illegal();
        }
        HandoverSession n = s;
        n.transferred = s.state;
        n.transfer_ready_at = ctx.t + orbits::propagation_delay(ctx.isl_distance_km) +
                              ctx.serialization_delay_s;
        return advance(std::move(n), Phase::StateTransferred, ctx.t);
    }
    case MbbEvent::SoftSwitch: {
        if (s.phase != Phase::StateTransferred) {
            return illegal();
        }
        if (ctx.t < s.transfer_ready_at) {
            return reject(s, "session state still in flight");
        }
        if (ctx.incoming_buffer_bits < ctx.switch_threshold_bits) {
            return reject(s, "incoming key buffer below switch threshold");
        }
        if (ctx.table == nullptr || ctx.graph == nullptr) {
            return reject(s, "no flow table to update");
        }
        sdqn::FlowTableEntry entry = ctx.new_entry;
        entry.installed_at = ctx.t;
        if (!ctx.table->install_flow(std::move(entry), *ctx.graph)) {
            return reject(s, "flow-table install refused");
        }
        HandoverSession n = s;
        // The swap is atomic, so the only discontinuity is the path delay.
        n.downtime_s = 0.0;
        n.jitter_s = std::abs(ctx.new_path_latency_s - ctx.old_path_latency_s);
        return advance(std::move(n), Phase::Switched, ctx.t);
    }
    case MbbEvent::Teardown:
        return s.phase == Phase::Switched ? advance(s, Phase::TornDown, ctx.t) : illegal();
    case MbbEvent::IncomingFailed:
        if (!pre_switch(s.phase)) {
            return illegal();
        }
        {
            HandoverSession n = s;
            n.aborted = true;
            n.transferred.reset();
            return advance(std::move(n), Phase::Idle, ctx.t);
        }
    case MbbEvent::OutgoingLost:
        if (pre_switch(s.phase)) {
            HandoverSession n = s;
            n.aborted = true;
            n.outgoing_lost = true;
            return advance(std::move(n), Phase::Idle, ctx.t);
        }
        if (s.phase == Phase::Switched) {
            return advance(s, Phase::TornDown, ctx.t);
        }
        return illegal();
    }
    return illegal();
}

// --- Fallback ----------------------------------------------------------------

const char* to_string(LinkMode m) {
    switch (m) {
    case LinkMode::FsoOk: return "fso_ok";
    case LinkMode::RfFallback: return "rf_fallback";
    case LinkMode::Failsafe: return "failsafe";
    }
    return "?";
}

bool fallback_trigger(const LinkObservables& o, const FallbackConfig& cfg) {
    return o.qber > cfg.qber_trigger || !o.beacon;
}

FallbackState fallback_step(const FallbackState& s, const LinkObservables& o,
                            const FallbackConfig& cfg) {
    FallbackState n = s;
    const bool trigger = fallback_trigger(o, cfg);
    auto enter = [&](LinkMode m) {
        n.mode = m;
        n.entered_at = o.t;
        n.buffered_key_at_entry = o.key_buffer_bits;
        n.recovering_since = -1.0;
    };
    if (s.mode == LinkMode::FsoOk) {
        if (trigger) {
            enter(LinkMode::RfFallback);
        }
        return n;
    }
    if (s.mode == LinkMode::RfFallback && o.key_buffer_bits < o.type_i_demand_per_tick_bits) {
        enter(LinkMode::Failsafe);
        return n;
    }
    const bool clear = !trigger && o.snr_db >= cfg.snr_threshold_db + cfg.hysteresis_db;
    if (!clear) {
        n.recovering_since = -1.0;
        return n;
    }
    if (n.recovering_since < 0.0) {
        n.recovering_since = o.t;
    }
    if (o.t - n.recovering_since >= cfg.dwell_s) {
        enter(LinkMode::FsoOk);
    }
    return n;
}

// --- Turbo -------------------------------------------------------------------

TurboState turbo_step(const TurboState& s, double t, double consumption_bps, double skr_bps,
                      const TurboConfig& cfg) {
    TurboState n = s;
    if (s.active) {
        if (skr_bps > consumption_bps * cfg.clear_margin) {
            n.active = false;
            n.over_since = -1.0;
        }
        return n;
    }
    if (consumption_bps > skr_bps) {
        if (n.over_since < 0.0) {
            n.over_since = t;
        }
        if (t - n.over_since >= cfg.window_s) {
            n.active = true;
        }
    } else {
        n.over_since = -1.0;
    }
    return n;
}

// --- Swapping ----------------------------------------------------------------

std::variant<SwapSchedule, RejectedTtl> schedule_swap(const EntangledPair& a,
                                                      const EntangledPair& b, double t_now,
                                                      const channel::QuantumMemorySpec& mem) {
    const double t = std::max({t_now, a.created_at, b.created_at});
    const double ttl = channel::entanglement_ttl(mem);
    const double age_a = t - a.created_at;
    const double age_b = t - b.created_at;
    if (age_a > ttl || age_b > ttl) {
        return RejectedTtl{"stored pair older than the entanglement TTL"};
    }
    const double f = channel::memory_fidelity(mem, age_a) * channel::memory_fidelity(mem, age_b);
    if (f < mem.f_min) {
        return RejectedTtl{"end-to-end fidelity estimate below F_min"};
    }
    SwapSchedule s;
    s.pair_a = a;
    s.pair_b = b;
    s.measurement_time = t;
    s.fidelity_estimate = f;
    s.end_to_end = EntangledPair{std::max(a.pair_id, b.pair_id) + 1, a.link + "+" + b.link, t};
    return s;
}

bool QuantumMemory::store(const EntangledPair& p) {
    if (static_cast<int>(slots_.size()) >= spec_.capacity) {
        return false;
    }
    slots_.push_back(p);
    return true;
}

bool QuantumMemory::contains(uint64_t pair_id) const {
    return std::any_of(slots_.begin(), slots_.end(),
                       [&](const EntangledPair& p) { return p.pair_id == pair_id; });
}

int QuantumMemory::evict_expired(double t) {
    const double ttl = channel::entanglement_ttl(spec_);
    const auto before = slots_.size();
    std::erase_if(slots_, [&](const EntangledPair& p) { return t - p.created_at > ttl; });
    return static_cast<int>(before - slots_.size());
}

EntangledPair QuantumMemory::execute(const SwapSchedule& s) {
    if (!contains(s.pair_a.pair_id) || !contains(s.pair_b.pair_id) ||
        s.pair_a.pair_id == s.pair_b.pair_id) {
        throw std::logic_error("QuantumMemory::execute: pairs not held in memory");
    }
    std::erase_if(slots_, [&](const EntangledPair& p) {
        return p.pair_id == s.pair_a.pair_id || p.pair_id == s.pair_b.pair_id;
    });
    consumed_ += 2;
    produced_ += 1;
    return s.end_to_end;
}

} // namespace qntn::proto
