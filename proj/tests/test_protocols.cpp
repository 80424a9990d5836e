#include <doctest.h>

#include "qntn/protocols.hpp"

#include <cmath>
#include <deque>

using namespace qntn;
using namespace qntn::proto;

namespace {

net::TimeVaryingGraph handover_graph() {
    net::TimeVaryingGraph g;
    g.nodes = {"ogs", "sat-0", "sat-1", "dst"};
    auto add = [&](const std::string& a, const std::string& b, double lat) {
        net::EdgeState e;
        e.a = a;
        e.b = b;
        e.edge_id = net::edge_name(e.kind, a, b);
        e.latency_s = lat;
        g.edges.push_back(e);
    };
    add("ogs", "sat-0", 0.0030);
    add("ogs", "sat-1", 0.0031);
    add("sat-0", "dst", 0.0020);
    add("sat-1", "dst", 0.0020);
    g.index();
    return g;
}

MbbContext base_ctx(double t) {
    MbbContext c;
    c.t = t;
    c.incoming_buffer_bits = 1e6;
    c.switch_threshold_bits = 1e3;
    c.isl_distance_km = 2000.0;
    return c;
}

} // namespace

TEST_CASE("make-before-break happy path") {
    const auto g = handover_graph();
    sdqn::FlowTable table;
    REQUIRE(table.install_flow(sdqn::FlowTableEntry{"f", {"ogs", "sat-0", "dst"}, "ogs", false, 0.0}, g));

    HandoverSession s;
    s.flow_id = "f";
    s.state = SessionCheckpoint{42, 7};
    const MbbEvent script[] = {MbbEvent::Predict, MbbEvent::BeginPreEstablish, MbbEvent::TrackingAcquired,
                               MbbEvent::TransferState};
    double t = 10.0;
    for (auto e : script) {
        const auto r = mbb_step(s, e, base_ctx(t));
        REQUIRE(r.accepted);
        s = r.session;
        t += 1.0;
    }
    CHECK(s.phase == Phase::StateTransferred);
    REQUIRE(s.transferred.has_value());
    CHECK(*s.transferred == s.state);
    CHECK(s.transfer_ready_at > 12.0);

    // The flow is still on the old path up to the switch.
    CHECK(table.active("f")->path == std::vector<std::string>{"ogs", "sat-0", "dst"});

    MbbContext sw = base_ctx(t);
    sw.table = &table;
    sw.graph = &g;
    sw.old_path_latency_s = 0.0050;
    sw.new_path_latency_s = 0.0051;
    sw.new_entry = sdqn::FlowTableEntry{"f", {"ogs", "sat-1", "dst"}, "ogs", false, 0.0};
    auto starved = sw;
    starved.incoming_buffer_bits = 10.0;
    CHECK_FALSE(mbb_step(s, MbbEvent::SoftSwitch, starved).accepted);

    const auto r = mbb_step(s, MbbEvent::SoftSwitch, sw);
    REQUIRE(r.accepted);
    s = r.session;
    CHECK(s.downtime_s == 0.0);
    CHECK(s.jitter_s * 1e3 < 1.0);
    CHECK(table.active_count("f") == 1);
    CHECK(table.active("f")->path == std::vector<std::string>{"ogs", "sat-1", "dst"});
    s = mbb_step(s, MbbEvent::Teardown, base_ctx(t + 1.0)).session;
    CHECK(s.phase == Phase::TornDown);
    for (int p = 1; p < kPhaseCount; ++p) {
        CHECK(s.entered(Phase(p)));
        if (p > 1) {
            CHECK(s.phase_time[size_t(p)] >= s.phase_time[size_t(p - 1)]);
        }
    }
}

TEST_CASE("handover FSM is total and only moves forward") {
    int accepted = 0;
    for (int p = 0; p < kPhaseCount; ++p) {
        for (int e = 0; e < kMbbEventCount; ++e) {
            HandoverSession s;
            s.phase = Phase(p);
            s.phase_time[size_t(p)] = 0.0;
            MbbResult r;
            CHECK_NOTHROW(r = mbb_step(s, MbbEvent(e), base_ctx(1.0)));
            if (!r.accepted) {
                CHECK(r.session.phase == s.phase);
                CHECK_FALSE(r.reason.empty());
                continue;
            }
            ++accepted;
            const bool abort = MbbEvent(e) == MbbEvent::IncomingFailed || MbbEvent(e) == MbbEvent::OutgoingLost;
            if (abort && r.session.phase == Phase::Idle) {
                CHECK(r.session.aborted);
            } else {
                CHECK(int(r.session.phase) > p);
            }
        }
    }
    CHECK(accepted > 0);
}

TEST_CASE("incoming link failure aborts to idle") {
    HandoverSession s;
    s = mbb_step(s, MbbEvent::Predict, base_ctx(0.0)).session;
    s = mbb_step(s, MbbEvent::BeginPreEstablish, base_ctx(1.0)).session;
    const auto r = mbb_step(s, MbbEvent::IncomingFailed, base_ctx(2.0));
    CHECK(r.accepted);
    CHECK(r.session.phase == Phase::Idle);
    CHECK(r.session.aborted);
    CHECK_FALSE(r.session.outgoing_lost);
}

TEST_CASE("fog trips RF fallback in one step and a drained buffer goes failsafe") {
    // Fog strong enough to null the link: no signal, QBER one half.
    channel::LinkGeometry geo;
    geo.extinction_db_per_km = 100.0;
    const double eta = channel::link_transmittance(geo, 1.0, 0.0).eta_total;
    const channel::QkdLinkModel q;
    LinkObservables o;
    o.t = 0.0;
    o.qber = channel::qber(q, eta);
    o.beacon = true;
    o.key_buffer_bits = 5000.0;
    o.type_i_demand_per_tick_bits = 1000.0;
    FallbackState s;
    s = fallback_step(s, o, FallbackConfig{});
    CHECK(s.mode == LinkMode::RfFallback);
    CHECK(s.buffered_key_at_entry == 5000.0);
    o.t = 0.01;
    o.key_buffer_bits = 999.0;
    s = fallback_step(s, o, FallbackConfig{});
    CHECK(s.mode == LinkMode::Failsafe);

    LinkObservables lost;
    lost.beacon = false;
    CHECK(fallback_trigger(lost, FallbackConfig{}));
}

TEST_CASE("hysteresis suppresses oscillation") {
    const FallbackConfig cfg;
    FallbackState s;
    std::deque<double> transitions;
    LinkMode prev = s.mode;
    for (int i = 0; i < 1000; ++i) {
        LinkObservables o;
        o.t = 0.01 * i;
        const bool up = i % 2 == 0;
        o.qber = up ? 0.10 : 0.12;
        o.snr_db = cfg.snr_threshold_db + cfg.hysteresis_db + (up ? 0.1 : -0.1);
        o.key_buffer_bits = 1e9;
        s = fallback_step(s, o, cfg);
        if (s.mode != prev) {
            transitions.push_back(o.t);
            prev = s.mode;
        }
        while (!transitions.empty() && transitions.front() <= o.t - 1.0) {
            transitions.pop_front();
        }
        CHECK(transitions.size() <= 1);
    }

    // A clean recovery needs the full dwell.
    FallbackState r;
    r.mode = LinkMode::RfFallback;
    for (int i = 0; i <= 100; ++i) {
        LinkObservables o;
        o.t = 0.01 * i;
        o.snr_db = 10.0;
        o.key_buffer_bits = 1e9;
        r = fallback_step(r, o, cfg);
        if (i < 100) {
            CHECK(r.mode == LinkMode::RfFallback);
        }
    }
    CHECK(r.mode == LinkMode::FsoOk);
}

TEST_CASE("turbo needs a full window of deficit") {
    TurboConfig cfg;
    TurboState s;
    for (int i = 0; i <= 100; ++i) {
        s = turbo_step(s, 0.01 * i, 2000.0, 1000.0, cfg);
    }
    CHECK(s.active);
    s = turbo_step(s, 1.1, 1000.0, 1100.0, cfg);
    CHECK(s.active);
    s = turbo_step(s, 1.2, 1000.0, 1300.0, cfg);
    CHECK_FALSE(s.active);

    TurboState spike;
    for (int i = 0; i <= 50; ++i) {
        spike = turbo_step(spike, 0.01 * i, 2000.0, 1000.0, cfg);
    }
    for (int i = 51; i <= 300; ++i) {
        spike = turbo_step(spike, 0.01 * i, 500.0, 1000.0, cfg);
    }
    CHECK_FALSE(spike.active);
}

TEST_CASE("swap feasibility matches a direct fidelity product") {
    channel::QuantumMemorySpec mem;
    mem.t2_s = 1.0;
    mem.f_min = 0.85;
    auto fid = [](double age) { return 0.5 * (1.0 + std::exp(-age)); };
    const double ttl = -std::log(2.0 * 0.85 - 1.0);
    for (double age_a = 0.0; age_a <= 0.6; age_a += 0.05) {
        for (double age_b = 0.0; age_b <= 0.6; age_b += 0.05) {
            const double now = 10.0;
            const EntangledPair a{1, "x", now - age_a};
            const EntangledPair b{2, "y", now - age_b};
            const auto r = schedule_swap(a, b, now, mem);
            const double da = now - a.created_at;
            const double db = now - b.created_at;
            const double f = fid(da) * fid(db);
            const bool ok = da <= ttl && db <= ttl && f >= 0.85;
            CHECK(std::holds_alternative<SwapSchedule>(r) == ok);
            if (ok) {
                CHECK(std::get<SwapSchedule>(r).fidelity_estimate == doctest::Approx(f).epsilon(1e-12));
            }
        }
    }
    const auto worn = schedule_swap({1, "x", 9.8}, {2, "y", 9.7}, 10.0, mem);
    REQUIRE(std::holds_alternative<RejectedTtl>(worn));
    CHECK(fid(0.2) * fid(0.3) == doctest::Approx(0.7915).epsilon(1e-4));

    const auto fresh = schedule_swap({1, "x", 10.0}, {2, "y", 10.0}, 10.0, mem);
    REQUIRE(std::holds_alternative<SwapSchedule>(fresh));
    CHECK(std::get<SwapSchedule>(fresh).fidelity_estimate == 1.0);
    CHECK(std::get<SwapSchedule>(fresh).measurement_time == 10.0);
}

TEST_CASE("quantum memory slots") {
    channel::QuantumMemorySpec spec;
    spec.capacity = 2;
    QuantumMemory m(spec);
    CHECK(m.store({1, "x", 0.0}));
    CHECK(m.store({2, "y", 0.0}));
    CHECK_FALSE(m.store({3, "z", 0.0}));
    const auto s = std::get<SwapSchedule>(schedule_swap({1, "x", 0.0}, {2, "y", 0.0}, 0.0, spec));
    const auto e2e = m.execute(s);
    CHECK(m.consumed() == 2);
    CHECK(m.produced() == 1);
    CHECK(m.used() == 0);
    CHECK(e2e.created_at == 0.0);
    CHECK_THROWS(m.execute(s));

    m.store({5, "x", 0.0});
    m.store({6, "x", 0.3});
    CHECK(m.evict_expired(0.4) == 1);
    CHECK(m.contains(6));
    CHECK_FALSE(m.contains(5));
}
