#include "qntn/sim/compare.hpp"

#include <atomic>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <thread>

namespace qntn::sim {

std::vector<RunResult> run_many(const SimConfig& cfg, const std::vector<ControllerKind>& controllers,
                                const std::vector<uint64_t>& seeds, unsigned threads) {
    struct Job {
        ControllerKind c;
        uint64_t seed;
    };
    std::vector<Job> jobs;
    for (auto c : controllers) {
        for (auto s : seeds) {
            jobs.push_back({c, s});
        }
    }
    std::vector<RunResult> out(jobs.size());
    std::vector<std::exception_ptr> errors(jobs.size());
    if (threads == 0) {
        threads = std::max(1u, std::thread::hardware_concurrency());
    }
    threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<size_t>(1, jobs.size())));
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (size_t i = next++; i < jobs.size(); i = next++) {
            try {
                RunOptions o;
                o.controller = jobs[i].c;
                o.seed = jobs[i].seed;
                out[i] = run_simulation(cfg, o);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < threads; ++k) {
        pool.emplace_back(worker);
    }
    for (auto& t : pool) {
        t.join();
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
    return out;
}

std::optional<double> relative_improvement(const std::string& metric, double a, double b) {
    if (b == 0.0) {
        return std::nullopt;
    }
    const double r = (a - b) / std::abs(b) * 100.0;
    return (higher_is_better(metric) ? r : -r) + 0.0;  // no negative zero
}

std::vector<MetricStats> aggregate(const std::vector<MetricsSummary>& runs,
                                   const std::vector<ControllerKind>& controllers) {
    std::vector<MetricStats> out;
    if (runs.empty() || controllers.empty()) {
        return out;
    }
    const auto names = metric_values(runs.front());
    for (auto c : controllers) {
        for (const auto& [name, unused] : names) {
            MetricStats s;
            s.metric = name;
            s.controller = to_string(c);
            std::vector<double> v;
            for (const auto& r : runs) {
                if (r.controller != s.controller) {
                    continue;
                }
                for (const auto& [n, x] : metric_values(r)) {
                    if (n == name && x) {
                        v.push_back(*x);
                    }
                }
            }
            s.n = static_cast<int>(v.size());
            if (!v.empty()) {
                double sum = 0.0;
                for (double x : v) {
                    sum += x;
                }
                s.mean = sum / static_cast<double>(v.size());
                double ss = 0.0;
                for (double x : v) {
                    ss += (x - *s.mean) * (x - *s.mean);
                }
                s.stddev = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
            }
            out.push_back(s);
        }
    }
    const std::string ref = to_string(controllers.back());
    for (auto& s : out) {
        const MetricStats* r = find_stats(out, s.metric, ref);
        if (s.mean && r != nullptr && r->mean) {
            s.relative_improvement_pct = relative_improvement(s.metric, *s.mean, *r->mean);
        }
    }
    return out;
}

CompareResult compare(const SimConfig& cfg, const std::vector<ControllerKind>& controllers,
                      const std::vector<uint64_t>& seeds, unsigned threads) {
    CompareResult r;
    r.controllers = controllers;
    r.seeds = seeds;
    for (auto& run : run_many(cfg, controllers, seeds, threads)) {
        r.runs.push_back(run.summary);
        r.trace_hashes.push_back(run.trace_hash);
    }
    r.stats = aggregate(r.runs, controllers);
    return r;
}

std::string compare_csv(const std::vector<MetricStats>& stats) {
    std::ostringstream o;
    o << std::setprecision(17);
    o << "metric,controller,n,mean,stddev,relative_improvement_pct\n";
    o << "format_version,,," << kCompareFormatVersion << ",,\n";
    auto put = [&](const std::optional<double>& v) {
        if (v) {
            o << *v;
        } else {
            o << "undefined";
        }
    };
    for (const auto& s : stats) {
        o << s.metric << ',' << s.controller << ',' << s.n << ',';
        put(s.mean);
        o << ',';
        put(s.stddev);
        o << ',';
        put(s.relative_improvement_pct);
        o << '\n';
    }
    return o.str();
}

const MetricStats* find_stats(const std::vector<MetricStats>& s, const std::string& metric,
                              const std::string& controller) {
    for (const auto& x : s) {
        if (x.metric == metric && x.controller == controller) {
            return &x;
        }
    }
    return nullptr;
}

} // namespace qntn::sim
