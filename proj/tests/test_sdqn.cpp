#include <doctest.h>

#include "qntn/sdqn.hpp"

#include <json.hpp>

#include <cmath>
#include <map>
#include <variant>

using namespace qntn;
using namespace qntn::sdqn;

namespace {

net::TimeVaryingGraph graph_of(const std::vector<std::string>& nodes,
                               const std::vector<std::tuple<std::string, std::string, double>>& links) {
    net::TimeVaryingGraph g;
    g.nodes = nodes;
    for (const auto& [a, b, lat] : links) {
        net::EdgeState e;
        e.kind = net::EdgeKind::Fiber;
        e.a = a;
        e.b = b;
        e.edge_id = net::edge_name(e.kind, a, b);
        e.latency_s = lat;
        g.edges.push_back(e);
    }
    g.index();
    return g;
}

} // namespace

TEST_CASE("telemetry round-trips bit for bit") {
    TelemetryRecord r;
    r.node_id = "ogs-1";
    r.t = 0.1 + 0.2;
    r.quantum_link_fidelity = {{"fso:ogs-1:sat-3", 0.9712345678901234}, {"fiber:a:b", 1e-300}};
    r.key_buffer_fill_level = {{"sat-3", 123456.789}, {"plant-a", 0.0}};
    r.turbulence_forecast_index = 0.047;
    r.carbon_intensity_source = 312.5;
    r.battery_state_of_charge = 100.0;
    const std::string line = serialize(r);
    CHECK(parse_telemetry(line) == r);
    CHECK(serialize(parse_telemetry(line)) == line);

    const auto j = nlohmann::json::parse(line);
    for (const char* k : {"node-id", "quantum-link-fidelity", "key-buffer-fill-level",
                          "turbulence-forecast-index", "carbon-intensity-source",
                          "battery-state-of-charge", "format_version"}) {
        CHECK(j.contains(k));
    }
    CHECK_THROWS(parse_telemetry(R"({"format_version": 99})"));
}

TEST_CASE("collected telemetry copies node state") {
    net::NodeState full;
    full.node_id = "sat-0";
    full.battery_capacity_wh = 100.0;
    full.battery_soc_wh = 100.0;
    full.key_buffers = {{"ogs-1", 0.0}};
    std::vector<net::EdgeState> edges;
    TelemetryContext ctx;
    ctx.t = 5.0;
    ctx.edges = &edges;
    const auto recs = collect_telemetry({full}, ctx);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].battery_state_of_charge == 100.0);
    CHECK(recs[0].key_buffer_fill_level.at("ogs-1") == 0.0);
    CHECK(link_fidelity_from_qber(0.5) == 0.0);
    CHECK(link_fidelity_from_qber(0.0) == 1.0);
    CHECK(link_fidelity_from_qber(0.05) == doctest::Approx(0.9));
}

TEST_CASE("intent translation") {
    const auto g = graph_of({"a", "b", "c", "d"}, {{"a", "b", 1.0}, {"b", "c", 1.0}, {"c", "d", 1.0}});
    auto region = [](const std::string& n) { return n == "b" ? std::string("restricted") : std::string("home"); };

    Intent bulk{"i4", "a", "d", net::TrafficClass::TypeIV, net::SecurityMode::Pqc, 0, {}};
    const auto p4 = std::get<Policy>(translate_intent(bulk, g, region));
    CHECK(p4.pqc);
    CHECK(p4.zero_key_consumption);
    CHECK_FALSE(p4.otp_key_continuity);
    CHECK(p4.security == net::SecurityMode::Pqc);

    Intent ctrl{"i1", "a", "d", net::TrafficClass::TypeI, net::SecurityMode::Pqc, 0, {}};
    const auto p1 = std::get<Policy>(translate_intent(ctrl, g, region));
    CHECK(p1.otp_key_continuity);
    CHECK(p1.security == net::SecurityMode::Otp);  // raised to the class floor
    CHECK_FALSE(p1.zero_key_consumption);

    Intent blocked = ctrl;
    blocked.forbidden_regions = {"restricted"};
    CHECK(std::holds_alternative<InfeasibleIntent>(translate_intent(blocked, g, region)));

    Intent self{"i0", "c", "c", net::TrafficClass::TypeII, net::SecurityMode::Aes256Rekey, 0, {}};
    const auto p0 = std::get<Policy>(translate_intent(self, g, region));
    REQUIRE(p0.candidate_paths.size() == 1);
    CHECK(p0.candidate_paths[0] == std::vector<std::string>{"c"});
}

TEST_CASE("intent translation enumerates every simple path") {
    // s-a-t, s-b-t, s-a-b-t, s-b-a-t. Deep recursion grows the path vector,
    // so this also guards against holding references into it.
    const auto g = graph_of({"s", "a", "b", "t"},
                            {{"s", "a", 1.0}, {"s", "b", 2.0}, {"a", "t", 1.0}, {"b", "t", 1.0}, {"a", "b", 0.5}});
    auto region = [](const std::string&) { return std::string("x"); };
    Intent in{"i", "s", "t", net::TrafficClass::TypeII, net::SecurityMode::Aes256Rekey, 0, {}};
    const auto p = std::get<Policy>(translate_intent(in, g, region));
    REQUIRE(p.candidate_paths.size() == 4);
    CHECK(p.candidate_paths[0] == std::vector<std::string>{"s", "a", "t"});
    CHECK(p.candidate_paths[1] == std::vector<std::string>{"s", "a", "b", "t"});
    for (const auto& path : p.candidate_paths) {
        CHECK(path.front() == "s");
        CHECK(path.back() == "t");
    }
}

TEST_CASE("flow table installs are atomic") {
    const auto g = graph_of({"a", "b", "c"}, {{"a", "b", 1.0}, {"b", "c", 1.0}, {"a", "c", 3.0}});
    FlowTable t;
    CHECK(t.install_flow(FlowTableEntry{"f", {"a", "b", "c"}, "b", false, 1.0}, g));
    CHECK(t.active_count("f") == 1);
    CHECK(t.install_flow(FlowTableEntry{"f", {"a", "c"}, "a", false, 2.0}, g));
    CHECK(t.active_count("f") == 1);
    REQUIRE(t.active("f") != nullptr);
    CHECK(t.active("f")->path == std::vector<std::string>{"a", "c"});
    for (const auto& e : t.entries()) {
        if (e.path.size() == 3) {
            CHECK_FALSE(e.active);
        }
    }

    const auto digest = t.digest();
    const auto entries = t.entries();
    CHECK_FALSE(t.install_flow(FlowTableEntry{"f", {"a", "x"}, "a", false, 3.0}, g));
    CHECK_FALSE(t.install_flow(FlowTableEntry{"f", {}, "a", false, 3.0}, g));
    CHECK(t.digest() == digest);
    CHECK(t.entries() == entries);
    t.retire("f");
    CHECK(t.active_count("f") == 0);
}

TEST_CASE("key ledger state machine") {
    KmsLedgerEntry e;
    e.t_generated = 1.0;
    e = kml_transition(e, KeyState::Stored, 1.0);
    e = kml_transition(e, KeyState::Consumed, 2.0);
    CHECK(e.state == KeyState::Consumed);
    CHECK_THROWS_AS(kml_transition(e, KeyState::Stored, 3.0), IllegalTransition);

    KmsLedgerEntry f;
    f.t_generated = 5.0;
    f = kml_transition(f, KeyState::Stored, 5.0);
    CHECK_THROWS_AS(kml_transition(f, KeyState::Expired, 4.0), IllegalTransition);
    KmsLedgerEntry g;
    CHECK_THROWS_AS(kml_transition(g, KeyState::Consumed, 1.0), IllegalTransition);
}

TEST_CASE("utilization on a five-block toy ledger") {
    KmsLedger l;
    CHECK_FALSE(l.utilization().has_value());
    CHECK(l.generate("L", 5 * 256.0 + 100.0, 0.0) == 5);
    CHECK(l.stored_blocks("L") == 5);
    CHECK(l.consume("L", 3, 1.0) == 3);
    CHECK(l.expire_all("L", 2.0) == 2);
    const auto tot = l.totals("L");
    CHECK(tot.generated == 1280.0);
    CHECK(tot.consumed == 768.0);
    CHECK(tot.expired == 512.0);
    CHECK(tot.stored == 0.0);
    CHECK(tot.consumed + tot.expired + tot.stored == tot.generated);
    CHECK(*l.utilization() == doctest::Approx(0.6).epsilon(1e-15));
    // The 100-bit remainder becomes a block once topped up.
    CHECK(l.generate("L", 156.0, 3.0) == 1);
}

TEST_CASE("ledger FIFO expiry by shelf life") {
    KmsLedger l;
    l.generate("L", 256.0, 0.0);
    l.generate("L", 256.0, 50.0);
    CHECK(l.expire_older_than("L", 60.0, 100.0) == 1);
    CHECK(l.stored_blocks("L") == 1);
    CHECK(l.consume("L", 5, 101.0) == 1);
    CHECK(l.stored_bits("L") == 0.0);
}
