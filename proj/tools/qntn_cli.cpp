// Command-line front end: validate, run, compare, metrics.
//
// Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.

#include "qntn/sim/compare.hpp"
#include "qntn/sim/config.hpp"
#include "qntn/sim/engine.hpp"
#include "qntn/sim/metrics.hpp"
#include "qntn/sim/trace.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace qntn::sim;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream o(p, std::ios::binary);
    if (!o) {
        throw std::runtime_error("cannot write " + p.string());
    }
    o << text;
    if (!o) {
        throw std::runtime_error("write failed: " + p.string());
    }
}

SimConfig load(const std::string& path) {
    try {
        return load_config(path);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

std::vector<uint64_t> parse_seeds(const std::string& s) {
    const auto dots = s.find("..");
    try {
        size_t used = 0;
        if (dots == std::string::npos) {
            const uint64_t v = std::stoull(s, &used);
            if (used != s.size()) {
                throw UsageError("bad seed range '" + s + "'");
            }
            return {v};
        }
        const std::string a = s.substr(0, dots);
        const std::string b = s.substr(dots + 2);
        const uint64_t lo = std::stoull(a, &used);
        if (used != a.size()) {
            throw UsageError("bad seed range '" + s + "'");
        }
        const uint64_t hi = std::stoull(b, &used);
        if (used != b.size() || hi < lo || hi - lo > 10000) {
            throw UsageError("bad seed range '" + s + "'");
        }
        std::vector<uint64_t> out;
        for (uint64_t v = lo; v <= hi; ++v) {
            out.push_back(v);
        }
        return out;
    } catch (const std::logic_error&) {
        throw UsageError("bad seed range '" + s + "'");
    }
}

std::vector<ControllerKind> parse_controllers(const std::string& s) {
    std::vector<ControllerKind> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(controller_from_string(item));
        } catch (const std::exception&) {
            throw UsageError("unknown controller '" + item + "'");
        }
    }
    if (out.empty()) {
        throw UsageError("no controllers given");
    }
    return out;
}

std::string learning_csv(const std::vector<qntn::rl::LearningPoint>& curve) {
    std::ostringstream o;
    o << std::setprecision(17) << "episode,mean_return\n";
    o << "format_version," << kMetricsFormatVersion << "\n";
    for (const auto& p : curve) {
        o << p.episode << ',' << p.mean_return << '\n';
    }
    return o.str();
}

void print_summary(const MetricsSummary& m) {
    for (const auto& [name, v] : metric_values(m)) {
        std::cout << "  " << std::left << std::setw(28) << name << ' ';
        if (v) {
            std::cout << *v;
        } else {
            std::cout << "undefined";
        }
        std::cout << '\n';
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"qntn: quantum-enabled NTN digital twin"};
    app.require_subcommand(1);

    std::string config_path, out_dir, trace_path, controllers_arg, seeds_arg;
    std::string controller_arg;
    uint64_t seed = 1;
    double duration = 0.0;
    unsigned threads = 0;

    auto* validate = app.add_subcommand("validate", "check a scenario config");
    validate->add_option("config", config_path, "config file")->required();

    auto* run = app.add_subcommand("run", "run one seed");
    run->add_option("config", config_path, "config file")->required();
    run->add_option("--seed", seed, "RNG seed")->required();
    run->add_option("--out", out_dir, "output directory")->required();
    run->add_option("--controller", controller_arg, "ai | baseline-shortest-path | carbon-blind-ai");
    run->add_option("--duration", duration, "truncate the run, seconds");

    auto* cmp = app.add_subcommand("compare", "compare controllers over seeds");
    cmp->add_option("config", config_path, "config file")->required();
    cmp->add_option("--controllers", controllers_arg, "comma list; the last is the reference")->required();
    cmp->add_option("--seeds", seeds_arg, "N..M or N")->required();
    cmp->add_option("--out", out_dir, "output directory")->required();
    cmp->add_option("--threads", threads, "worker threads, 0 = all cores");

    auto* met = app.add_subcommand("metrics", "recompute the summary from a trace");
    met->add_option("trace", trace_path, "trace.jsonl")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return 1;
    }

    try {
        if (*validate) {
            const auto cfg = load(config_path);
            std::cout << "ok " << cfg.name << '\n';
            return 0;
        }
        if (*run) {
            auto cfg = load(config_path);
            RunOptions o;
            o.controller = controller_arg.empty() ? cfg.controller : parse_controllers(controller_arg).front();
            o.seed = seed;
            if (duration > 0.0) {
                if (duration > cfg.duration_s) {
                    throw UsageError("--duration exceeds the scenario duration");
                }
                o.duration_s = duration;
            }
            const auto r = run_simulation(cfg, o);
            fs::create_directories(out_dir);
            write_file(fs::path(out_dir) / "trace.jsonl", r.trace);
            write_file(fs::path(out_dir) / "metrics.csv", metrics_csv({r.summary}));
            json s = metrics_json(r.summary);
            s["trace_hash"] = r.trace_hash;
            write_file(fs::path(out_dir) / "summary.json", s.dump(2) + "\n");
            if (!r.learning_curve.empty()) {
                write_file(fs::path(out_dir) / "learning_curve.csv", learning_csv(r.learning_curve));
            }
            std::cout << cfg.name << " controller=" << to_string(o.controller) << " seed=" << seed
                      << " trace_hash=" << r.trace_hash << '\n';
            print_summary(r.summary);
            return 0;
        }
        if (*cmp) {
            auto cfg = load(config_path);
            const auto ctrls = parse_controllers(controllers_arg);
            const auto seeds = parse_seeds(seeds_arg);
            const auto res = compare(cfg, ctrls, seeds, threads);
            fs::create_directories(out_dir);
            write_file(fs::path(out_dir) / "compare.csv", compare_csv(res.stats));
            write_file(fs::path(out_dir) / "metrics.csv", metrics_csv(res.runs));
            json h;
            h["format_version"] = kCompareFormatVersion;
            h["config"] = cfg.name;
            h["reference"] = to_string(ctrls.back());
            json runs = json::array();
            for (size_t i = 0; i < res.runs.size(); ++i) {
                runs.push_back({{"controller", res.runs[i].controller},
                                {"seed", res.runs[i].seed},
                                {"trace_hash", res.trace_hashes[i]}});
            }
            h["runs"] = runs;
            write_file(fs::path(out_dir) / "compare.json", h.dump(2) + "\n");
            std::cout << compare_csv(res.stats);
            return 0;
        }
        if (*met) {
            const auto t = read_trace_file(trace_path);
            std::cout << metrics_csv({compute_metrics(t)});
            return 0;
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n' << app.help();
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "invalid config: " << e.what() << '\n';
        return 1;
    } catch (const TraceError& e) {
        std::cerr << "invalid trace: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
