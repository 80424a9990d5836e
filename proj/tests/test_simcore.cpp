#include <doctest.h>

#include "qntn/sim/compare.hpp"
#include "qntn/sim/config.hpp"
#include "qntn/sim/engine.hpp"
#include "qntn/sim/metrics.hpp"
#include "qntn/sim/trace.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace qntn;
using namespace qntn::sim;
using nlohmann::json;

namespace {

std::string config_path(const std::string& name) {
    return std::string(QNTN_SOURCE_DIR) + "/configs/" + name + ".json";
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    return json::parse(in);
}

} // namespace

TEST_CASE("objective on hand-computed ticks") {
    const std::vector<ObjectiveTerms> ticks{
        {50.0, 100.0, 0.002, 10.0, 1.0},
        {100.0, 100.0, 0.001, 5.0, 0.5},
        {0.0, 0.0, 0.0, 0.0, 1.0},
    };
    CHECK(objective_eval(ObjectiveWeightsView{}, ticks) == 0.0);
    const ObjectiveWeightsView w{1.0, 10.0, 0.01, 2.0, 0.9};
    // 2.38 + 0.9 * 1.94 + 0.81 * 3
    CHECK(objective_eval(w, ticks) == doctest::Approx(6.556).epsilon(1e-12));
    const ObjectiveWeightsView flat{1.0, 0.0, 0.0, 0.0, 1.0};
    CHECK(objective_eval(flat, {ticks[0]}) == doctest::Approx(0.5));
    CHECK(objective_eval(w, {}) == 0.0);
}

TEST_CASE("metrics from a hand-built trace") {
    json header;
    header["config"] = "hand";
    header["controller"] = "ai";
    header["seed"] = 3;
    header["objective"] = {{"w1", 1.0}, {"w2", 0.0}, {"w3", 0.0}, {"w4", 0.0}, {"gamma", 1.0}};
    header["slo"] = {{"type_i_latency_s", 1e-3}, {"type_ii_latency_s", 50e-3}};
    TraceWriter w(header);
    w.add(60.0, Category::Control, "tick",
          {{"secure_bits", 10.0}, {"demand_bits", 10.0}, {"type_i_active_s", 60.0},
           {"type_i_keyed_s", 60.0}, {"key_generated_bits", 1000.0}, {"key_consumed_bits", 600.0},
           {"delivered_bits", 100.0}, {"carbon_g", 2.0}, {"type_i_latency_max_s", 5e-4}});
    w.add(100.0, Category::Handover, "completed", {{"mbb", true}, {"downtime_s", 0.0}, {"jitter_ms", 0.2}});
    w.add(100.0, Category::Handover, "aborted", json::object());
    w.add(110.0, Category::Fallback, "transition", json::object());
    w.add(120.0, Category::Control, "tick",
          {{"type_i_active_s", 40.0}, {"type_i_keyed_s", 39.0}, {"type_i_latency_max_s", 2e-3}});
    const auto m = compute_metrics(parse_trace_text(w.text()));
    CHECK(m.secure_session_uptime_pct == doctest::Approx(99.0).epsilon(1e-14));
    CHECK(m.tier1_ticks == 2);
    CHECK(m.objective_j == doctest::Approx(2.0));
    CHECK(m.mbb_completed == 1);
    CHECK(m.mbb_aborted == 1);
    CHECK(m.fallback_transitions == 1);
    CHECK(*m.handover_jitter_max_ms == 0.2);
    CHECK(*m.key_utilization_pct == doctest::Approx(60.0));
    CHECK(*m.carbon_per_bit_g == doctest::Approx(0.02));
    CHECK_FALSE(m.type_i_slo_met);
    CHECK(m.type_ii_slo_met);
    CHECK(m.seed == 3);
}

TEST_CASE("trace writer and parser reject malformed input") {
    TraceWriter w(json::object());
    w.add(1.0, Category::Key, "x");
    CHECK_THROWS_AS(w.add(0.5, Category::Key, "x"), std::logic_error);
    w.add(1.0, Category::Channel, "y");
    CHECK(w.records() == 2);

    CHECK_THROWS_AS(parse_trace_text(""), TraceError);
    CHECK_THROWS_AS(parse_trace_text(R"({"kind":"header","format_version":2})"), TraceError);
    CHECK_THROWS(parse_trace_text("{\"kind\":\"header\",\"format_version\":1}\n"
                                  "{\"t\":0,\"cat\":\"weather\",\"type\":\"x\"}\n"));
    CHECK_THROWS_AS(parse_trace_text("{\"kind\":\"header\",\"format_version\":1}\n"
                                     "{\"t\":2,\"cat\":\"key\",\"type\":\"x\"}\n"
                                     "{\"t\":1,\"cat\":\"key\",\"type\":\"x\"}\n"),
                    TraceError);
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("event queue orders by time, category, then insertion") {
    EventQueue q;
    std::vector<std::string> order;
    q.push(2.0, Category::Channel, [&](double) { order.push_back("late"); });
    q.push(1.0, Category::Control, [&](double) { order.push_back("control"); });
    q.push(1.0, Category::Channel, [&](double) { order.push_back("channel-a"); });
    q.push(1.0, Category::Channel, [&](double t) {
        order.push_back("channel-b");
        q.push(t, Category::Energy, [&](double) { order.push_back("spawned"); });
    });
    CHECK(q.run_until(1.5) == 4);
    CHECK(order == std::vector<std::string>{"channel-a", "channel-b", "spawned", "control"});
    CHECK(q.size() == 1);
    CHECK(q.next_time() == 2.0);
}

TEST_CASE("percentile and relative improvement") {
    CHECK(percentile_nearest_rank({5.0, 1.0, 3.0}, 99.0) == 5.0);
    CHECK(percentile_nearest_rank({5.0, 1.0, 3.0}, 50.0) == 3.0);
    CHECK_THROWS(percentile_nearest_rank({}, 50.0));
    CHECK(*relative_improvement("secure_session_uptime_pct", 110.0, 100.0) == doctest::Approx(10.0));
    CHECK(*relative_improvement("carbon_per_bit_g", 0.8, 1.0) == doctest::Approx(20.0));
    CHECK_FALSE(relative_improvement("carbon_g", 1.0, 0.0).has_value());
}

TEST_CASE("config errors are reported") {
    const std::string dir = std::string(QNTN_SOURCE_DIR) + "/configs";
    const json good = read_json(config_path("clear_sky"));
    CHECK_NOTHROW(load_config(config_path("clear_sky")).validate());
    CHECK_NOTHROW(config_from_json(good, dir));

    // Variants are written next to the shipped configs' data via an absolute CSV path.
    const auto tmp = std::filesystem::temp_directory_path() / "qntn_config_test.json";
    auto load_variant = [&](json j) {
        j["carbon"]["csv"] = dir + "/" + good["carbon"]["csv"].get<std::string>();
        std::ofstream(tmp) << j.dump();
        return load_config(tmp.string());
    };
    CHECK_NOTHROW(load_variant(good));
    json bad = good;
    bad["format_version"] = 99;
    CHECK_THROWS_AS(load_variant(bad), ConfigError);
    bad = good;
    bad["duration_s"] = -5;
    CHECK_THROWS(load_variant(bad).validate());
    bad = good;
    bad["carbon"]["csv"] = "does/not/exist.csv";
    std::ofstream(tmp) << bad.dump();
    CHECK_THROWS(load_config(tmp.string()));
    std::filesystem::remove(tmp);
    CHECK_THROWS(load_config(dir + "/missing.json"));
    CHECK_THROWS(controller_from_string("oracle"));
    CHECK(controller_from_string("baseline-shortest-path") == ControllerKind::BaselineShortestPath);
}

TEST_CASE("front reaches western sites first") {
    const auto cfg = load_config(config_path("storm"));
    const auto iv = front_intervals(cfg, 0.0);
    double first_1 = INFINITY;
    double first_2 = INFINITY;
    for (const auto& w : iv) {
        (w.site_id == "ogs-1" ? first_1 : first_2) = std::min(w.site_id == "ogs-1" ? first_1 : first_2, w.t0);
    }
    CHECK(std::isfinite(first_1));
    CHECK(std::isfinite(first_2));
    CHECK(first_1 < first_2);
    const auto shifted = front_intervals(cfg, 120.0);
    REQUIRE(shifted.size() == iv.size());
    for (size_t i = 0; i < iv.size(); ++i) {
        CHECK(shifted[i].t0 == doctest::Approx(iv[i].t0 + 120.0));
    }
}

TEST_CASE("baseline key store") {
    const auto cfg = load_config(config_path("clear_sky"));
    CHECK(nearest_key_store(cfg, "plant-a") == "ogs-1");
}

TEST_CASE("zero demand run") {
    const auto cfg = load_config(config_path("zero_demand"));
    RunOptions opt;
    opt.duration_s = 600.0;
    const auto r = run_simulation(cfg, opt);
    CHECK(r.summary.secure_session_uptime_pct == 100.0);
    CHECK(r.summary.type_i_active_s == 0.0);
    CHECK(r.summary.type_i_outages == 0);
    if (r.summary.jitter_samples == 0) {
        CHECK_FALSE(r.summary.handover_jitter_max_ms.has_value());
    }
    const auto again = compute_metrics(parse_trace_text(r.trace));
    CHECK(metrics_csv({again}) == metrics_csv({r.summary}));
}

TEST_CASE("short runs are reproducible and key is conserved") {
    const auto cfg = load_config(config_path("clear_sky"));
    RunOptions opt;
    opt.duration_s = 900.0;
    opt.seed = 5;
    const auto a = run_simulation(cfg, opt);
    const auto b = run_simulation(cfg, opt);
    CHECK(a.trace_hash == b.trace_hash);
    CHECK(a.trace == b.trace);
    CHECK(a.trace_hash == fnv1a_hex(a.trace));
    const auto& m = a.summary;
    CHECK(m.key_consumed_bits + m.key_expired_bits <= m.key_generated_bits + cfg.control.initial_key_bits * double(cfg.sites.size()) + 1e-6);
    CHECK(m.tier1_ticks == 15);

    opt.seed = 6;
    CHECK(run_simulation(cfg, opt).trace_hash != a.trace_hash);
}

TEST_CASE("comparison CSV and self-comparison") {
    const auto cfg = load_config(config_path("clear_sky"));
    RunOptions opt;
    opt.duration_s = 300.0;
    const auto r = run_simulation(cfg, opt);
    const auto stats = aggregate({r.summary, r.summary}, {ControllerKind::Ai, ControllerKind::Ai});
    const auto* up = find_stats(stats, "secure_session_uptime_pct", "ai");
    REQUIRE(up != nullptr);
    REQUIRE(up->relative_improvement_pct.has_value());
    CHECK(*up->relative_improvement_pct == 0.0);

    const std::string csv = compare_csv(stats);
    CHECK(csv.rfind("metric,controller,n,mean,stddev,relative_improvement_pct\n", 0) == 0);
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);
    std::getline(lines, line);
    CHECK(line.rfind("format_version", 0) == 0);

    const std::string mcsv = metrics_csv({r.summary});
    CHECK(mcsv.rfind("metric,controller,seed,value\nformat_version,,,1\n", 0) == 0);
}

TEST_CASE("golden trace for a short clear-sky run") {
    // Regenerate with: qntn run configs/clear_sky.json --seed 1 --duration 300 --out DIR
    std::ifstream in(std::string(QNTN_SOURCE_DIR) + "/tests/golden/clear_sky_seed1_300s.jsonl", std::ios::binary);
    REQUIRE(in);
    std::stringstream golden;
    golden << in.rdbuf();
    const auto cfg = load_config(config_path("clear_sky"));
    RunOptions opt;
    opt.seed = 1;
    opt.duration_s = 300.0;
    const auto r = run_simulation(cfg, opt);
    CHECK(r.trace_hash == fnv1a_hex(golden.str()));
    if (r.trace != golden.str()) {
        std::istringstream a(r.trace);
        std::istringstream b(golden.str());
        std::string la, lb;
        int line = 0;
        while (std::getline(a, la) && std::getline(b, lb)) {
            ++line;
            if (la != lb) {
                FAIL_CHECK("first difference at line " << line << "\n got: " << la << "\nwant: " << lb);
                break;
            }
        }
    }
}
