#include "qntn/sim/engine.hpp"

#include "qntn/control_mpc.hpp"
#include "qntn/observability.hpp"
#include "qntn/orbits.hpp"
#include "qntn/protocols.hpp"
#include "qntn/sdqn.hpp"
#include "qntn/sim/trace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

namespace qntn::sim {

using nlohmann::json;
using channel::Rng;

namespace {

constexpr double kKmPerDegLat = 111.32;
constexpr double kTypeIMaxHops = 5;

Rng substream(uint64_t seed, uint64_t stream) {
    std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                      static_cast<uint32_t>(stream), 0x51u};
    return Rng(seq);
}

enum Stream : uint64_t { kWeather = 1, kDemand, kChannel, kForecast, kPolicy, kSeeing };

} // namespace

std::vector<net::WeatherInterval> front_intervals(const SimConfig& cfg, double start_offset_s) {
    std::vector<net::WeatherInterval> out;
    const auto& f = cfg.weather.front;
    if (!f.enabled) {
        return out;
    }
    for (const auto& s : cfg.sites) {
        const bool listed = f.sites.empty()
                                ? s.site.kind == orbits::SiteKind::Ogs
                                : std::find(f.sites.begin(), f.sites.end(), s.site.site_id) != f.sites.end();
        if (!listed) {
            continue;
        }
        const double east_km = (s.site.longitude_deg - f.origin_lon_deg) * kKmPerDegLat *
                               std::cos(s.site.latitude_deg * M_PI / 180.0);
        const double arrival = f.start_s + start_offset_s + std::max(0.0, east_km) / f.speed_kmh * 3600.0;
        net::SiteWeather base = cfg.weather.baseline;
        if (auto it = cfg.weather.site_baseline.find(s.site.site_id); it != cfg.weather.site_baseline.end()) {
            base = it->second;
        }
        net::SiteWeather turb = base;
        turb.rytov_zenith = f.rytov_zenith;
        turb.extinction_db_per_km = f.extinction_db_per_km;
        if (f.turbulence_s > 0.0) {
            out.push_back({s.site.site_id, arrival, arrival + f.turbulence_s, turb});
        }
        net::SiteWeather cloud = turb;
        cloud.cloud = true;
        if (f.cloud_s > 0.0) {
            out.push_back({s.site.site_id, arrival + f.turbulence_s,
                           arrival + f.turbulence_s + f.cloud_s, cloud});
        }
    }
    return out;
}

std::string nearest_key_store(const SimConfig& cfg, const std::string& src) {
    net::TimeVaryingGraph g;
    for (const auto& s : cfg.sites) {
        g.nodes.push_back(s.site.site_id);
    }
    for (const auto& se : cfg.static_edges) {
        if (se.kind != net::EdgeKind::Fiber) {
            continue;
        }
        net::EdgeState e;
        e.kind = se.kind;
        e.a = se.a;
        e.b = se.b;
        e.edge_id = net::edge_name(se.kind, se.a, se.b);
        e.latency_s = orbits::propagation_delay(se.length_km) * cfg.physics.fiber_refractive_index;
        g.edges.push_back(e);
    }
    g.index();
    std::string best;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& s : cfg.sites) {
        if (s.site.kind != orbits::SiteKind::Ogs) {
            continue;
        }
        auto r = rl::baseline_shortest_path(g, src, s.site.site_id);
        if (r && r->latency_s < best_d) {
            best_d = r->latency_s;
            best = s.site.site_id;
        }
    }
    if (best.empty()) {
        for (const auto& s : cfg.sites) {
            if (s.site.kind == orbits::SiteKind::Ogs) {
                return s.site.site_id;
            }
        }
    }
    return best;
}

rl::TrainResult tier2_policy(const SimConfig& cfg) {
    if (cfg.control.rl.weights) {
        rl::TrainResult r;
        r.policy = *cfg.control.rl.weights;
        return r;
    }
    rl::ToyEnvConfig env;
    rl::Policy init;
    init.scales.key_bits = env.buffer_cap_bits;
    init.mode = rl::PolicyMode::Stochastic;
    rl::TrainConfig tc;
    tc.episodes = cfg.control.rl.episodes;
    tc.learning_rate = cfg.control.rl.learning_rate;
    tc.shield = true;
    tc.seed = 1;
    return rl::train(init, env, cfg.reward, tc);
}

namespace {

struct Downlink {
    std::string ogs;
    int sat = 0;
    std::string edge_id;
    channel::CorrelatedIrradiance irradiance;
    proto::FallbackState fallback;
    proto::TurboState turbo;
    mpc::LaserLevel level = mpc::LaserLevel::Nominal;
    double elevation_deg = 0.0;
    double range_km = 0.0;
    double skr_bps = 0.0;
    double qber = 0.0;
    // Tier-1 aggregates for the channel record.
    double skr_sum = 0.0;
    double qber_sum = 0.0;
    long samples = 0;
};

struct SatFlow {
    net::FlowDemand demand;
    net::TrafficClassSpec spec;
    double volume_bits = 0.0;     // bulk flows
    double delivered_bits = 0.0;
    double start_at = 0.0;        // after deferral
    bool started = false;
    bool finished = false;
    bool deferred = false;
    std::vector<std::string> path;
    double latency_s = 0.0;
    bool up = false;
    bool ever_up = false;
    double down_since = 0.0;
    double next_rekey = 0.0;
    bool keyed = false;
    proto::HandoverSession hs;
    std::vector<std::string> incoming;
    double set_time = std::numeric_limits<double>::infinity();
};

struct TickAcc {
    double secure_bits = 0.0;
    double demand_bits = 0.0;
    double delivered_bits = 0.0;
    double latency_bits = 0.0;   // sum of bits * latency
    double carbon_g = 0.0;
    long type_i_active_steps = 0;
    long type_i_keyed_steps = 0;
    long scheduled = 0;
    long violations = 0;
    long outages = 0;
    long overrides = 0;
    double type_i_latency_max = 0.0;
    double type_ii_latency_max = 0.0;
};

class Engine {
public:
    Engine(const SimConfig& cfg, const RunOptions& opt);
    RunResult run();

private:
    bool ai() const { return controller_ != ControllerKind::BaselineShortestPath; }
    bool carbon_aware() const { return controller_ == ControllerKind::Ai; }

    std::string region_of(const std::string& node) const;
    double ci_of(const std::string& node, double t) const;
    const orbits::ContactWindow* window_at(const std::string& site, int sat, double t) const;
    std::optional<double> path_latency(const std::vector<std::string>& path) const;
    double path_carbon_score(const std::vector<std::string>& path, double t) const;
    std::string path_ogs(const std::vector<std::string>& path) const;
    std::vector<int> path_sats(const std::vector<std::string>& path) const;
    std::vector<std::vector<std::string>> candidates(const SatFlow& f) const;
    std::optional<std::vector<std::string>> best_path(const SatFlow& f, double t,
                                                      const std::set<int>& avoid_sats,
                                                      std::optional<int> only_sat = {},
                                                      double outlive_s = -1.0) const;
    double route_set_time(const std::vector<std::string>& path, double t) const;

    void geometry_step(double t);
    void update_downlinks(double t0);
    void tier2(double t0);
    void route_flows(double t0);
    void ai_route(SatFlow& f, double t0);
    void baseline_route(SatFlow& f, double t0);
    void hard_switch(SatFlow& f, const std::vector<std::string>& path, double t0, bool broke);
    void install(SatFlow& f, double t);
    void deliver(double t0);
    void energy_and_carbon(double t0);
    void control_tick(double t);
    void plan(double t);
    void run_mpc(double t);
    void defer_bulk(double t);
    void telemetry(double t);
    double expected_key_bits(int sat, const std::string& site, double a, double b) const;
    double nominal_skr(int sat, const std::string& site, double t, bool with_weather) const;
    void emit(double t, Category c, const std::string& type, json fields = json::object());

    const SimConfig& cfg_;
    ControllerKind controller_;
    uint64_t seed_;
    double duration_;
    orbits::Constellation constellation_;
    net::Topology topo_;
    net::WeatherTimeline weather_;
    std::vector<net::FlowDemand> demand_;
    std::vector<std::string> ogs_;
    std::map<std::string, int> terminals_;
    std::map<std::string, const SiteConfig*> site_cfg_;
    std::map<std::string, std::vector<orbits::ContactWindow>> windows_;   // per site
    std::vector<orbits::ContactWindow> ogs_windows_;
    std::vector<orbits::ContactWindow> haps_windows_;

    Rng rng_channel_, rng_forecast_, rng_policy_, rng_seeing_;
    TraceWriter trace_;
    EventQueue queue_;
    rl::TrainResult training_;
    rl::Policy policy_;
    rl::ShieldRuleSet shield_;

    // State.
    std::vector<orbits::SatelliteState> sats_;
    net::TimeVaryingGraph graph_;
    sdqn::KmsLedger ledger_;
    sdqn::FlowTable table_;
    std::map<std::string, Downlink> downlinks_;      // by edge id
    std::map<int, mpc::FlightPlan> plans_;
    std::map<int, mpc::LaserLevel> mpc_level_;
    std::map<int, double> soc_;
    std::map<std::string, obs::KalmanState> seeing_;
    std::map<std::string, double> last_r0_forecast_;
    std::vector<SatFlow> sat_flows_;
    std::vector<net::FlowDemand> type_i_;
    std::set<std::string> started_flows_;
    std::set<std::string> ended_flows_;
    std::string baseline_store_;
    std::string type_i_store_;            // last pool used by the AI, for turbo
    double type_i_remainder_ = 0.0;
    bool type_i_keyed_ = true;
    double type_i_latency_ = 0.0;
    std::vector<std::string> type_i_path_;
    double critical_bits_ = 0.0;
    double type_i_rate_ = 0.0;
    TickAcc acc_;
    double key_gen_mark_ = 0.0, key_used_mark_ = 0.0, key_exp_mark_ = 0.0;
    double geometry_clock_ = 0.0;
    rl::RlState rl_state_;
};

Engine::Engine(const SimConfig& cfg, const RunOptions& opt)
    : cfg_(cfg),
      controller_(opt.controller),
      seed_(opt.seed),
      duration_(opt.duration_s.value_or(cfg.duration_s)),
      constellation_(cfg.constellation),
      topo_(cfg.topology()),
      rng_channel_(substream(opt.seed, kChannel)),
      rng_forecast_(substream(opt.seed, kForecast)),
      rng_policy_(substream(opt.seed, kPolicy)),
      rng_seeing_(substream(opt.seed, kSeeing)),
      trace_([&] {
          json h;
          h["config"] = cfg.name;
          h["seed"] = opt.seed;
          h["controller"] = to_string(opt.controller);
          h["duration_s"] = opt.duration_s.value_or(cfg.duration_s);
          h["objective"] = {{"w1", cfg.objective.w1},
                            {"w2", cfg.objective.w2},
                            {"w3", cfg.objective.w3},
                            {"w4", cfg.objective.w4},
                            {"gamma", cfg.objective.gamma}};
          h["slo"] = {{"type_i_latency_s", net::class_spec(net::TrafficClass::TypeI).latency_target_s},
                      {"type_ii_latency_s", net::class_spec(net::TrafficClass::TypeII).latency_target_s}};
          h["ticks"] = {{"tier1_s", cfg.tier1_tick_s},
                        {"tier2_s", cfg.tier2_tick_s},
                        {"geometry_s", cfg.geometry_step_s}};
          return h;
      }()) {
    if (!(duration_ > 0.0) || duration_ > cfg.duration_s) {
        throw std::invalid_argument("run duration must be in (0, duration_s]");
    }
    for (const auto& s : cfg.sites) {
        site_cfg_[s.site.site_id] = &s;
        weather_.set_baseline(s.site.site_id, cfg.weather.baseline);
        if (s.site.kind == orbits::SiteKind::Ogs) {
            ogs_.push_back(s.site.site_id);
            terminals_[s.site.site_id] = s.terminals;
        }
    }
    for (const auto& [id, w] : cfg.weather.site_baseline) {
        weather_.set_baseline(id, w);
    }
    Rng rng_weather = substream(opt.seed, kWeather);
    double offset = 0.0;
    if (cfg.weather.front.enabled && cfg.weather.front.start_jitter_s > 0.0) {
        offset = std::uniform_real_distribution<double>(0.0, cfg.weather.front.start_jitter_s)(rng_weather);
    }
    for (auto& iv : front_intervals(cfg, offset)) {
        weather_.add(iv);
    }
    for (const auto& iv : cfg.weather.intervals) {
        weather_.add(iv);
    }

    Rng rng_demand = substream(opt.seed, kDemand);
    net::TrafficSpec traffic = cfg.traffic;
    traffic.horizon_s = duration_;
    demand_ = net::demand_generator(traffic, rng_demand);
    for (const auto& d : demand_) {
        if (d.start_s >= duration_) {
            continue;
        }
        if (d.cls == net::TrafficClass::TypeI) {
            type_i_.push_back(d);
        } else {
            SatFlow f;
            f.demand = d;
            f.spec = net::class_spec(d.cls);
            f.volume_bits = d.data_rate_bps * d.duration_s;
            f.start_at = d.start_s;
            f.next_rekey = d.start_s;
            f.hs.flow_id = d.flow_id;
            sat_flows_.push_back(std::move(f));
        }
    }
    for (const auto& f : type_i_) {
        type_i_rate_ = std::max(type_i_rate_, f.data_rate_bps);
    }
    // Starved: less than the factor times one Tier-2 step of Type-I demand,
    // and never less than the factor times one key block, since blocks are
    // drawn whole.
    critical_bits_ = cfg.control.critical_threshold_factor *
                     std::max(type_i_rate_ * cfg.tier2_tick_s, sdqn::kKeyBlockBits);
    shield_ = rl::default_rules(critical_bits_);

    for (const auto& s : cfg.sites) {
        if (s.site.kind != orbits::SiteKind::Ogs && s.site.kind != orbits::SiteKind::Haps) {
            continue;
        }
        auto ws = orbits::contact_windows(constellation_, s.site, 0.0, duration_);
        for (const auto& w : ws) {
            (s.site.kind == orbits::SiteKind::Ogs ? ogs_windows_ : haps_windows_).push_back(w);
        }
        windows_[s.site.site_id] = std::move(ws);
    }

    for (int i = 0; i < constellation_.size(); ++i) {
        soc_[i] = cfg.energy.soc_wh;
        mpc_level_[i] = mpc::LaserLevel::Nominal;
    }
    for (const auto& o : ogs_) {
        obs::KalmanState k;
        const double r0 = obs::truth_r0(weather_.at(o, 0.0), cfg.physics.weather_layer_km,
                                        cfg.physics.geometry.wavelength_nm);
        k.mean = std::log(r0);
        k.variance = 0.25;
        k.process_noise = 1e-4;
        seeing_[o] = k;
        if (cfg.control.initial_key_bits > 0.0) {
            ledger_.generate(o, cfg.control.initial_key_bits, 0.0);
        } else {
            ledger_.generate(o, 0.0, 0.0);
        }
    }

    if (!type_i_.empty()) {
        baseline_store_ = nearest_key_store(cfg, type_i_.front().src);
    }
    if (ai()) {
        training_ = tier2_policy(cfg);
        policy_ = training_.policy;
        // Keep the trained ratio between the key scale and the critical level.
        const rl::ToyEnvConfig toy;
        policy_.scales.key_bits = critical_bits_ * toy.buffer_cap_bits / (2.0 * toy.demand_bits);
        const bool greedy = opt.greedy.value_or(cfg.control.rl.greedy);
        policy_.mode = greedy ? rl::PolicyMode::Greedy : rl::PolicyMode::Stochastic;
        for (const auto& o : ogs_) {
            rl::LinkObservation l;
            l.link_id = o;
            l.next_hop = o;
            l.key_bearing = true;
            rl_state_.links.push_back(l);
        }
        rl::LinkObservation c;
        c.link_id = "classical";
        c.next_hop = "classical";
        c.key_bearing = false;
        c.link_quality = 1.0;
        rl_state_.links.push_back(c);
        rl_state_.head_class = net::TrafficClass::TypeI;
    }
}

void Engine::emit(double t, Category c, const std::string& type, json fields) {
    trace_.add(t, c, type, std::move(fields));
}

std::string Engine::region_of(const std::string& node) const {
    auto it = site_cfg_.find(node);
    return it == site_cfg_.end() ? std::string() : it->second->region;
}

double Engine::ci_of(const std::string& node, double t) const {
    const std::string r = region_of(node);
    return r.empty() ? 0.0 : cfg_.carbon.ci(r, t);
}

const orbits::ContactWindow* Engine::window_at(const std::string& site, int sat, double t) const {
    auto it = windows_.find(site);
    if (it == windows_.end()) {
        return nullptr;
    }
    for (const auto& w : it->second) {
        if (w.sat_id == sat && w.t_rise <= t && t <= w.t_set) {
            return &w;
        }
    }
    return nullptr;
}

std::optional<double> Engine::path_latency(const std::vector<std::string>& path) const {
    double l = 0.0;
    for (size_t i = 1; i < path.size(); ++i) {
        const auto* e = graph_.edge_between(path[i - 1], path[i]);
        if (e == nullptr || e->status == net::EdgeStatus::Down) {
            return std::nullopt;
        }
        l += e->latency_s;
    }
    return l;
}

double Engine::path_carbon_score(const std::vector<std::string>& path, double t) const {
    double g = 0.0;
    for (const auto& n : path) {
        auto it = site_cfg_.find(n);
        if (it != site_cfg_.end() && !it->second->region.empty()) {
            g += it->second->energy_per_bit_j * cfg_.carbon.ci(it->second->region, t);
        }
    }
    return g;
}

std::string Engine::path_ogs(const std::vector<std::string>& path) const {
    for (const auto& n : path) {
        if (std::find(ogs_.begin(), ogs_.end(), n) != ogs_.end()) {
            return n;
        }
    }
    return {};
}

std::vector<int> Engine::path_sats(const std::vector<std::string>& path) const {
    std::vector<int> out;
    for (const auto& n : path) {
        if (n.rfind("sat-", 0) == 0) {
            out.push_back(std::stoi(n.substr(4)));
        }
    }
    return out;
}

std::vector<std::vector<std::string>> Engine::candidates(const SatFlow& f) const {
    sdqn::Intent in;
    in.intent_id = f.demand.flow_id;
    in.src = f.demand.src;
    in.dst = f.demand.dst;
    in.cls = f.demand.cls;
    in.security = f.spec.security;
    in.forbidden_regions = f.demand.forbidden_regions;
    auto r = sdqn::translate_intent(
        in, graph_, [&](const std::string& n) { return region_of(n); }, kTypeIMaxHops, 64);
    if (auto* p = std::get_if<sdqn::Policy>(&r)) {
        return p->candidate_paths;
    }
    return {};
}

std::optional<std::vector<std::string>> Engine::best_path(const SatFlow& f, double t,
                                                          const std::set<int>& avoid_sats,
                                                          std::optional<int> only_sat,
                                                          double outlive_s) const {
    std::optional<std::vector<std::string>> best;
    double best_c = 0.0, best_l = 0.0;
    for (auto& p : candidates(f)) {
        const auto sats = path_sats(p);
        if (sats.empty()) {
            continue;
        }
        bool skip = false;
        for (int s : sats) {
            skip = skip || avoid_sats.count(s) > 0 || (only_sat && s != *only_sat);
        }
        if (skip) {
            continue;
        }
        const auto lat = path_latency(p);
        if (!lat || *lat > f.spec.latency_target_s || route_set_time(p, t) <= outlive_s) {
            continue;
        }
        const double c = carbon_aware() ? path_carbon_score(p, t) : 0.0;
        if (!best || c < best_c || (c == best_c && (*lat < best_l || (*lat == best_l && p < *best)))) {
            best = p;
            best_c = c;
            best_l = *lat;
        }
    }
    return best;
}

double Engine::route_set_time(const std::vector<std::string>& path, double t) const {
    double set = std::numeric_limits<double>::infinity();
    for (size_t i = 1; i < path.size(); ++i) {
        const std::string& a = path[i - 1];
        const std::string& b = path[i];
        const bool a_sat = a.rfind("sat-", 0) == 0;
        const bool b_sat = b.rfind("sat-", 0) == 0;
        if (a_sat == b_sat) {
            continue;
        }
        const std::string& site = a_sat ? b : a;
        const int sat = std::stoi((a_sat ? a : b).substr(4));
        if (const auto* w = window_at(site, sat, t)) {
            set = std::min(set, w->t_set);
        } else {
            set = std::min(set, t);
        }
    }
    return set;
}

// --- Geometry step -------------------------------------------------------

void Engine::geometry_step(double t) {
    const double g = cfg_.geometry_step_s;
    const double t0 = t - g;
    sats_ = orbits::propagate(constellation_, t0);
    graph_ = net::snapshot(
        t0, topo_, constellation_, sats_,
        [&](const std::string& s, double tt) { return weather_.at(s, tt); }, cfg_.physics, nullptr);
    update_downlinks(t0);
    tier2(t0);
    route_flows(t0);
    deliver(t0);
    energy_and_carbon(t0);
    if (t + 0.5 * g <= duration_) {
        queue_.push(t + g, Category::Channel, [this](double tt) { geometry_step(tt); });
    }
}

void Engine::update_downlinks(double t0) {
    std::map<std::string, std::pair<std::string, int>> want;  // edge id -> (ogs, sat)
    if (ai()) {
        for (const auto& [sat, plan] : plans_) {
            const auto* a = plan.downlink_at(t0);
            if (a == nullptr) {
                continue;
            }
            const auto id = net::edge_name(net::EdgeKind::FsoGroundSat, a->site_id, net::sat_name(sat));
            if (graph_.edge(id) != nullptr && soc_[sat] > cfg_.energy.reserve_wh) {
                want[id] = {a->site_id, sat};
            }
        }
    } else {
        // Greedy tracking: every OGS terminal follows the highest visible
        // satellite not already taken.
        std::set<int> taken;
        for (const auto& o : ogs_) {
            std::vector<std::pair<double, int>> vis;
            for (const auto* e : graph_.incident(o)) {
                if (e->kind != net::EdgeKind::FsoGroundSat) {
                    continue;
                }
                const int sat = std::stoi(e->other(o).substr(4));
                const double el = orbits::elevation(*topo_.site(o), sats_[size_t(sat)], t0,
                                                    cfg_.constellation.earth_angle0_deg);
                vis.emplace_back(-el, sat);
            }
            std::sort(vis.begin(), vis.end());
            int used = 0;
            for (const auto& [nel, sat] : vis) {
                if (used >= terminals_[o]) {
                    break;
                }
                if (taken.count(sat) || soc_[sat] <= cfg_.energy.reserve_wh) {
                    continue;
                }
                taken.insert(sat);
                ++used;
                want[net::edge_name(net::EdgeKind::FsoGroundSat, o, net::sat_name(sat))] = {o, sat};
            }
        }
    }
    for (auto it = downlinks_.begin(); it != downlinks_.end();) {
        if (want.count(it->first) == 0) {
            emit(geometry_clock_, Category::Channel, "downlink_end",
                 {{"link", it->first}, {"ogs", it->second.ogs}, {"sat", it->second.sat}});
            it = downlinks_.erase(it);
        } else {
            ++it;
        }
    }
    for (const auto& [id, os] : want) {
        auto [it, fresh] = downlinks_.try_emplace(id);
        Downlink& d = it->second;
        if (fresh) {
            d.ogs = os.first;
            d.sat = os.second;
            d.edge_id = id;
            d.irradiance = channel::CorrelatedIrradiance(cfg_.scintillation_rho);
            d.fallback.link_id = id;
            d.fallback.entered_at = t0;
            emit(geometry_clock_, Category::Channel, "downlink_start",
                 {{"link", id}, {"ogs", d.ogs}, {"sat", d.sat}});
        }
        const auto* site = topo_.site(d.ogs);
        d.elevation_deg = orbits::elevation(*site, sats_[size_t(d.sat)], t0, cfg_.constellation.earth_angle0_deg);
        d.range_km = orbits::slant_range_km(*site, sats_[size_t(d.sat)], t0, cfg_.constellation.earth_angle0_deg);
        mpc::LaserLevel level = ai() ? mpc_level_[d.sat] : mpc::LaserLevel::Nominal;
        if (ai() && d.turbo.active && soc_[d.sat] > cfg_.energy.reserve_wh + 0.1 * cfg_.energy.capacity_wh) {
            level = mpc::LaserLevel::Turbo;
        }
        if (level != d.level) {
            emit(geometry_clock_, Category::Energy, "laser_level",
                 {{"link", id}, {"sat", d.sat}, {"level", mpc::to_string(level)}});
            d.level = level;
        }
    }
}

void Engine::tier2(double t0) {
    const double dt = cfg_.tier2_tick_s;
    const int n = static_cast<int>(std::llround(cfg_.geometry_step_s / dt));
    proto::FallbackConfig fb;
    fb.snr_threshold_db = channel::qkd_snr_threshold_db(cfg_.physics.qkd);
    fb.hysteresis_db = cfg_.control.fallback_hysteresis_db;
    fb.dwell_s = cfg_.control.fallback_dwell_s;
    proto::TurboConfig tc{cfg_.control.turbo_window_s, cfg_.control.turbo_margin};
    const double demand_step = type_i_rate_ * dt;

    for (int k = 0; k < n; ++k) {
        const double tau = t0 + k * dt;
        // Type-I scheduling first so turbo sees which store is being drained.
        std::string store;
        bool active = false;
        double need = 0.0;
        for (const auto& f : type_i_) {
            if (f.start_s <= tau && tau < f.end_s()) {
                active = true;
                need += f.data_rate_bps * dt;
            }
        }
        bool keyed = false;
        if (active) {
            ++acc_.type_i_active_steps;
            acc_.demand_bits += need;
            acc_.delivered_bits += need;
            acc_.latency_bits += need * type_i_latency_;
            if (ai()) {
                for (size_t i = 0; i + 1 < rl_state_.links.size(); ++i) {
                    auto& l = rl_state_.links[i];
                    l.key_buffer_bits = ledger_.stored_bits(l.link_id);
                    l.link_quality = 0.0;
                    l.neighbor_load = 0.0;
                }
                for (const auto& [id, d] : downlinks_) {
                    for (auto& l : rl_state_.links) {
                        if (l.link_id == d.ogs && d.fallback.mode == proto::LinkMode::FsoOk) {
                            l.link_quality = 1.0;
                        }
                    }
                }
                // The shield filters the proposal; a filtered store is masked
                // and the policy asked again, so a healthy store is still used.
                rl::RlState s = rl_state_;
                int chosen = -1;
                while (true) {
                    rl::RlAction a = rl::policy_act(policy_, s, rng_policy_);
                    if (cfg_.control.shield) {
                        auto res = rl::shield_filter(s, a, shield_);
                        if (res.overridden) {
                            ++acc_.overrides;
                            const int bad = a.hop;
                            if (bad >= 0 && s.links[size_t(bad)].key_bearing) {
                                s.links.erase(s.links.begin() + bad);
                                if (std::any_of(s.links.begin(), s.links.end(),
                                                [](const auto& l) { return l.key_bearing; })) {
                                    continue;
                                }
                            }
                            a = res.action;
                        }
                    }
                    if (!a.failsafe && a.hop >= 0) {
                        chosen = a.hop;
                    }
                    break;
                }
                if (chosen >= 0 && s.links[size_t(chosen)].key_bearing) {
                    store = s.links[size_t(chosen)].link_id;
                }
            } else {
                store = baseline_store_;
            }
            if (!store.empty()) {
                ++acc_.scheduled;
                if (ledger_.stored_bits(store) < critical_bits_) {
                    ++acc_.violations;
                }
                while (type_i_remainder_ < need) {
                    if (ledger_.consume(store, 1, tau) != 1) {
                        break;
                    }
                    type_i_remainder_ += ledger_.block_bits();
                }
                if (type_i_remainder_ >= need) {
                    type_i_remainder_ -= need;
                    keyed = true;
                } else {
                    ++acc_.outages;
                }
            }
            if (keyed) {
                ++acc_.type_i_keyed_steps;
                acc_.secure_bits += need;
            }
            if (keyed != type_i_keyed_) {
                emit(geometry_clock_, Category::Key, keyed ? "type_i_keyed" : "type_i_unkeyed",
                     {{"at", tau}, {"store", store}});
                type_i_keyed_ = keyed;
            }
            type_i_store_ = store;
        }

        for (auto& [id, d] : downlinks_) {
            const auto* site = topo_.site(d.ogs);
            const auto w = weather_.at(d.ogs, tau);
            const auto gg = net::fso_turbulence(cfg_.physics, *site, d.range_km, d.elevation_deg, w);
            const double irr = d.irradiance.next(gg, rng_channel_);
            const auto cs = net::sample_fso(cfg_.physics, *site, d.range_km, d.elevation_deg, w,
                                            rng_channel_, irr);
            const double factor = mpc::laser_power_factor(d.level);
            d.skr_bps = cs.skr_bps * factor;
            d.qber = cs.qber;
            d.skr_sum += d.skr_bps;
            d.qber_sum += cs.qber;
            ++d.samples;

            proto::LinkObservables o;
            o.t = tau;
            o.qber = cs.qber;
            o.beacon = true;
            o.snr_db = cs.snr_db;
            o.key_buffer_bits = ledger_.stored_bits(d.ogs);
            o.type_i_demand_per_tick_bits = demand_step;
            const auto before = d.fallback.mode;
            d.fallback = proto::fallback_step(d.fallback, o, fb);
            if (d.fallback.mode != before) {
                emit(geometry_clock_, Category::Fallback, "transition",
                     {{"at", tau},
                      {"link", id},
                      {"from", proto::to_string(before)},
                      {"to", proto::to_string(d.fallback.mode)}});
            }
            if (d.fallback.mode == proto::LinkMode::FsoOk) {
                ledger_.generate(d.ogs, d.skr_bps * dt, tau);
            }
            const double consumption = (active && store == d.ogs) ? type_i_rate_ : 0.0;
            const bool was = d.turbo.active;
            d.turbo = proto::turbo_step(d.turbo, tau, consumption,
                                        d.fallback.mode == proto::LinkMode::FsoOk ? d.skr_bps : 0.0, tc);
            if (was != d.turbo.active && ai()) {
                emit(geometry_clock_, Category::Energy, d.turbo.active ? "turbo_on" : "turbo_off",
                     {{"at", tau}, {"link", id}});
            }
        }
    }
    if (!type_i_.empty()) {
        acc_.type_i_latency_max = std::max(acc_.type_i_latency_max, type_i_latency_);
    }
}

// --- Routing and handovers ----------------------------------------------

void Engine::install(SatFlow& f, double t) {
    sdqn::FlowTableEntry e;
    e.flow_id = f.demand.flow_id;
    e.path = f.path;
    e.key_source_link = path_ogs(f.path);
    e.installed_at = t;
    table_.install_flow(e, graph_);
}

void Engine::hard_switch(SatFlow& f, const std::vector<std::string>& path, double t0, bool broke) {
    const auto lat = path_latency(path).value_or(0.0);
    if (f.ever_up) {
        const double downtime = broke ? (t0 - f.down_since) + cfg_.geometry_step_s : cfg_.geometry_step_s;
        emit(geometry_clock_, Category::Handover, "completed",
             {{"flow", f.demand.flow_id},
              {"mbb", false},
              {"from", f.path},
              {"to", path},
              {"jitter_ms", std::abs(lat - f.latency_s) * 1e3},
              {"downtime_s", downtime}});
    }
    f.path = path;
    f.latency_s = lat;
    f.up = true;
    f.ever_up = true;
    f.hs = proto::HandoverSession();
    f.hs.flow_id = f.demand.flow_id;
    f.incoming.clear();
    f.set_time = route_set_time(path, t0);
    install(f, t0);
}

void Engine::baseline_route(SatFlow& f, double t0) {
    auto r = rl::baseline_shortest_path(graph_, f.demand.src, f.demand.dst);
    const bool current_ok = f.up && path_latency(f.path).has_value();
    if (!r) {
        if (f.up && !current_ok) {
            f.up = false;
            f.down_since = t0;
            table_.retire(f.demand.flow_id);
        }
        return;
    }
    if (f.up && current_ok && r->nodes == f.path) {
        f.latency_s = *path_latency(f.path);
        return;
    }
    hard_switch(f, r->nodes, t0, !current_ok);
}

void Engine::ai_route(SatFlow& f, double t0) {
    const std::set<int> none;
    const bool current_ok = f.up && path_latency(f.path).has_value();
    if (f.up && !current_ok) {
        if (f.hs.phase != proto::Phase::Idle && f.hs.phase != proto::Phase::TornDown &&
            f.hs.phase != proto::Phase::Switched) {
            proto::MbbContext ctx;
            ctx.t = t0;
            auto res = proto::mbb_step(f.hs, proto::MbbEvent::OutgoingLost, ctx);
            emit(geometry_clock_, Category::Handover, "aborted",
                 {{"flow", f.demand.flow_id}, {"reason", "outgoing_lost"}});
            f.hs = res.session;
        }
        f.up = false;
        f.down_since = t0;
        table_.retire(f.demand.flow_id);
    }
    if (!f.up) {
        if (auto p = best_path(f, t0, none)) {
            hard_switch(f, *p, t0, f.ever_up);
        }
        return;
    }
    f.latency_s = *path_latency(f.path);
    f.set_time = route_set_time(f.path, t0);

    proto::MbbContext ctx;
    ctx.t = t0;
    ctx.serialization_delay_s = cfg_.control.serialization_delay_s;
    const double rekey_rate = f.spec.rekey_period_s > 0.0 ? f.spec.rekey_bits / f.spec.rekey_period_s : 0.0;
    ctx.switch_threshold_bits = std::max(sdqn::kKeyBlockBits, rekey_rate * cfg_.control.switch_buffer_s);
    auto step = [&](proto::MbbEvent e) {
        auto res = proto::mbb_step(f.hs, e, ctx);
        if (res.accepted) {
            f.hs = res.session;
            emit(geometry_clock_, Category::Handover, "phase",
                 {{"flow", f.demand.flow_id}, {"event", proto::to_string(e)},
                  {"phase", proto::to_string(f.hs.phase)}});
        }
        return res.accepted;
    };

    if (f.hs.phase == proto::Phase::Switched) {
        step(proto::MbbEvent::Teardown);
    }
    if (f.hs.phase == proto::Phase::TornDown) {
        const auto keep = f.hs;
        f.hs = proto::HandoverSession();
        f.hs.flow_id = keep.flow_id;
        f.hs.state = keep.state;
    }
    std::set<int> out_sats;
    for (int s : path_sats(f.path)) {
        out_sats.insert(s);
    }
    if (f.hs.phase == proto::Phase::Idle) {
        if (t0 >= f.set_time - cfg_.control.handover_lead_s) {
            // Only a path that outlives the current one is worth a handover.
            if (auto alt = best_path(f, t0, out_sats, std::nullopt, f.set_time)) {
                f.incoming = *alt;
                step(proto::MbbEvent::Predict);
                f.hs.outgoing_sat = net::sat_name(*out_sats.begin());
                f.hs.incoming_sat = net::sat_name(path_sats(*alt).front());
                f.hs.outgoing_link = f.path.empty() ? "" : path_ogs(f.path);
                f.hs.incoming_link = path_ogs(*alt);
                step(proto::MbbEvent::BeginPreEstablish);
            }
        }
        return;
    }
    // An in-progress handover tracks the best path through the incoming sat.
    const int in_sat = std::stoi(f.hs.incoming_sat.substr(4));
    auto incoming = best_path(f, t0, out_sats, in_sat, f.set_time);
    if (!incoming) {
        if (t0 >= f.hs.phase_time[size_t(proto::Phase::PreEstablishing)] + cfg_.control.acquisition_s) {
            step(proto::MbbEvent::IncomingFailed);
            emit(geometry_clock_, Category::Handover, "aborted",
                 {{"flow", f.demand.flow_id}, {"reason", "incoming_failed"}});
        }
        return;
    }
    f.incoming = *incoming;
    const auto in_lat = *path_latency(f.incoming);
    ctx.incoming_buffer_bits = ledger_.stored_bits(path_ogs(f.incoming));
    if (f.hs.phase == proto::Phase::PreEstablishing &&
        t0 >= f.hs.phase_time[size_t(proto::Phase::PreEstablishing)] + cfg_.control.acquisition_s) {
        step(proto::MbbEvent::TrackingAcquired);
    }
    if (f.hs.phase == proto::Phase::BufferSync && ctx.incoming_buffer_bits >= ctx.switch_threshold_bits) {
        const auto& a = sats_[size_t(*out_sats.begin())].position;
        const auto& b = sats_[size_t(in_sat)].position;
        ctx.isl_distance_km = (a - b).norm();
        step(proto::MbbEvent::TransferState);
    }
    if (f.hs.phase == proto::Phase::StateTransferred && t0 >= f.hs.transfer_ready_at) {
        const bool crossover = in_lat <= f.latency_s;
        const bool deadline = t0 >= f.set_time - cfg_.control.switch_guard_s;
        if (crossover || deadline) {
            ctx.old_path_latency_s = f.latency_s;
            ctx.new_path_latency_s = in_lat;
            ctx.table = &table_;
            ctx.graph = &graph_;
            ctx.new_entry.flow_id = f.demand.flow_id;
            ctx.new_entry.path = f.incoming;
            ctx.new_entry.key_source_link = path_ogs(f.incoming);
            const auto old_path = f.path;
            if (step(proto::MbbEvent::SoftSwitch)) {
                emit(geometry_clock_, Category::Handover, "completed",
                     {{"flow", f.demand.flow_id},
                      {"mbb", true},
                      {"from", old_path},
                      {"to", f.incoming},
                      {"trigger", crossover ? "crossover" : "deadline"},
                      {"jitter_ms", f.hs.jitter_s * 1e3},
                      {"downtime_s", f.hs.downtime_s}});
                f.path = f.incoming;
                f.latency_s = in_lat;
                f.set_time = route_set_time(f.path, t0);
            }
        }
    }
}

void Engine::route_flows(double t0) {
    for (auto& f : sat_flows_) {
        const bool running = f.started && !f.finished;
        if (!running) {
            continue;
        }
        if (ai()) {
            ai_route(f, t0);
        } else {
            baseline_route(f, t0);
        }
    }
}

void Engine::deliver(double t0) {
    const double g = cfg_.geometry_step_s;
    for (auto& f : sat_flows_) {
        if (f.finished) {
            continue;
        }
        const bool bulk = f.demand.cls == net::TrafficClass::TypeIV;
        if (!f.started) {
            if (t0 < f.start_at) {
                continue;
            }
            f.started = true;
            emit(geometry_clock_, Category::Flow, "start",
                 {{"flow", f.demand.flow_id}, {"class", net::to_string(f.demand.cls)},
                  {"src", f.demand.src}, {"dst", f.demand.dst}, {"deferred", f.deferred}});
            if (ai()) {
                ai_route(f, t0);
            } else {
                baseline_route(f, t0);
            }
        }
        const bool past_end = bulk ? (f.delivered_bits >= f.volume_bits || t0 >= std::max(f.demand.deadline_s, f.start_at + f.demand.duration_s))
                                   : t0 >= f.demand.end_s();
        if (past_end || t0 >= duration_) {
            f.finished = true;
            table_.retire(f.demand.flow_id);
            emit(geometry_clock_, Category::Flow, "end",
                 {{"flow", f.demand.flow_id}, {"delivered_bits", f.delivered_bits}});
            continue;
        }
        double want = f.demand.data_rate_bps * g;
        if (bulk) {
            want = std::min(want, f.volume_bits - f.delivered_bits);
        }
        acc_.demand_bits += want;
        if (!f.up) {
            continue;
        }
        // Rekeyed classes draw key at each rekey instant from the path's store.
        if (f.spec.rekey_period_s > 0.0) {
            while (t0 >= f.next_rekey) {
                const std::string store = path_ogs(f.path);
                const int blocks = static_cast<int>(std::ceil(f.spec.rekey_bits / ledger_.block_bits()));
                if (!store.empty() && ledger_.stored_blocks(store) >= blocks) {
                    ledger_.consume(store, blocks, t0 + g);
                    f.keyed = true;
                    f.next_rekey += f.spec.rekey_period_s;
                } else {
                    f.keyed = false;
                    break;
                }
            }
        } else {
            f.keyed = f.spec.security == net::SecurityMode::Pqc;
        }
        f.delivered_bits += want;
        acc_.delivered_bits += want;
        acc_.latency_bits += want * f.latency_s;
        if (f.keyed) {
            acc_.secure_bits += want;
        }
        if (f.demand.cls == net::TrafficClass::TypeII) {
            acc_.type_ii_latency_max = std::max(acc_.type_ii_latency_max, f.latency_s);
        }
        // Forwarding energy at every ground node on the path.
        for (const auto& n : f.path) {
            auto it = site_cfg_.find(n);
            if (it != site_cfg_.end() && !it->second->region.empty() && it->second->energy_per_bit_j > 0.0) {
                acc_.carbon_g += net::carbon_grams(it->second->energy_per_bit_j * want / g,
                                                   cfg_.carbon.ci(it->second->region, t0), g);
            }
        }
    }
    // Type-I forwarding energy.
    for (const auto& f : type_i_) {
        if (!(f.start_s <= t0 && t0 < f.end_s())) {
            continue;
        }
        const double bits = f.data_rate_bps * g;
        for (const auto& n : type_i_path_) {
            auto it = site_cfg_.find(n);
            if (it != site_cfg_.end() && !it->second->region.empty() && it->second->energy_per_bit_j > 0.0) {
                acc_.carbon_g += net::carbon_grams(it->second->energy_per_bit_j * bits / g,
                                                   cfg_.carbon.ci(it->second->region, t0), g);
            }
        }
    }
}

void Engine::energy_and_carbon(double t0) {
    const double g = cfg_.geometry_step_s;
    std::map<std::string, int> active;
    std::map<int, double> laser;
    for (const auto& [id, d] : downlinks_) {
        ++active[d.ogs];
        laser[d.sat] = mpc::laser_power_factor(d.level);
    }
    for (const auto& s : cfg_.sites) {
        if (s.region.empty()) {
            continue;
        }
        const double p = s.idle_power_w + s.terminal_power_w * active[s.site.site_id];
        if (p > 0.0) {
            acc_.carbon_g += net::carbon_grams(p, cfg_.carbon.ci(s.region, t0), g);
        }
    }
    const auto& e = cfg_.energy;
    for (auto& [sat, soc] : soc_) {
        const bool sunlit = !sats_[size_t(sat)].in_eclipse;
        double load = e.bus_load_w;
        if (ai()) {
            if (const auto pit = plans_.find(sat); pit != plans_.end()) {
                for (const auto& a : pit->second.actions) {
                    if (a.kind == mpc::ActionKind::Sleep && a.t_start <= t0 && t0 < a.t_end) {
                        load = e.sleep_load_w;
                    }
                }
            }
        }
        if (auto it = laser.find(sat); it != laser.end()) {
            load += e.laser_load_w * it->second;
        }
        const double before = soc;
        soc = std::clamp(soc + ((sunlit ? e.solar_w : 0.0) - load) * g / 3600.0, 0.0, e.capacity_wh);
        if (before > e.reserve_wh && soc <= e.reserve_wh) {
            emit(geometry_clock_, Category::Energy, "reserve_reached", {{"sat", sat}, {"soc_wh", soc}});
        }
    }
}

// --- Tier-1 ---------------------------------------------------------------

double Engine::nominal_skr(int sat, const std::string& site, double t, bool with_weather) const {
    const auto* s = topo_.site(site);
    const auto st = constellation_.state(sat, t);
    const double el = orbits::elevation(*s, st, t, cfg_.constellation.earth_angle0_deg);
    if (el < s->min_elevation_deg) {
        return 0.0;
    }
    const double range = orbits::slant_range_km(*s, st, t, cfg_.constellation.earth_angle0_deg);
    const net::SiteWeather w = with_weather ? weather_.baseline(site) : net::SiteWeather{};
    const auto geo = net::fso_geometry(cfg_.physics, *s, range, el, w);
    const double eta = channel::link_transmittance(geo, 1.0, 0.0).eta_total;
    return channel::secret_key_rate(cfg_.physics.qkd, eta);
}

double Engine::expected_key_bits(int sat, const std::string& site, double a, double b) const {
    const auto* s = topo_.site(site);
    const auto kit = seeing_.find(site);
    const double step = 30.0;
    double bits = 0.0;
    for (double t = a; t < b; t += step) {
        const double dt = std::min(step, b - t);
        const double tm = t + 0.5 * dt;
        const auto st = constellation_.state(sat, tm);
        const double el = orbits::elevation(*s, st, tm, cfg_.constellation.earth_angle0_deg);
        if (el < s->min_elevation_deg) {
            continue;
        }
        const double range = orbits::slant_range_km(*s, st, tm, cfg_.constellation.earth_angle0_deg);
        const auto w = weather_.baseline(site);
        const auto geo = net::fso_geometry(cfg_.physics, *s, range, el, w);
        obs::LinkSnrModel m;
        m.qkd = cfg_.physics.qkd;
        m.eta_clear = channel::link_transmittance(geo, 1.0, 0.0).eta_total;
        m.elevation_deg = el;
        m.range_km = range;
        m.turbulent_layer_km = cfg_.physics.weather_layer_km;
        m.aperture_m = cfg_.physics.geometry.rx_aperture_m;
        m.wavelength_nm = cfg_.physics.geometry.wavelength_nm;
        double r0 = obs::truth_r0(w, m.turbulent_layer_km, m.wavelength_nm);
        if (auto it = last_r0_forecast_.find(site + "@" + std::to_string(static_cast<long>(tm / cfg_.tier1_tick_s)));
            it != last_r0_forecast_.end()) {
            r0 = it->second;
        }
        obs::KalmanState k = kit == seeing_.end() ? obs::KalmanState{} : kit->second;
        k.mean = std::log(r0);
        const auto est = obs::predict_snr(m, k, channel::qkd_snr_threshold_db(m.qkd));
        const double rytov = net::slant_rytov(obs::rytov_zenith_from_r0(m, r0), el);
        const auto gg = channel::rytov_to_gg(rytov, m.aperture_m, range, m.wavelength_nm);
        const double fade = 1.0 / (1.0 + gg.scintillation_index());
        bits += channel::secret_key_rate(m.qkd, m.eta_clear * fade) * est.p_above_qkd_threshold * dt;
    }
    return bits;
}

void Engine::plan(double t) {
    const double horizon = cfg_.control.mpc_horizon * cfg_.tier1_tick_s;
    const double t1 = std::min(duration_, t + horizon);
    obs::ScenarioTruth truth;
    truth.weather = &weather_;
    truth.carbon = &cfg_.carbon;
    truth.demand = &demand_;
    truth.sites = ogs_;
    truth.regions = cfg_.carbon.ids();
    truth.turbulent_layer_km = cfg_.physics.weather_layer_km;
    truth.wavelength_nm = cfg_.physics.geometry.wavelength_nm;
    truth.end_s = duration_;
    const auto fc = obs::forecast_feeds(truth, t, horizon, cfg_.control.forecast, rng_forecast_);
    last_r0_forecast_.clear();
    for (const auto& [site, series] : fc.turbulence_index) {
        for (size_t k = 0; k < series.size(); ++k) {
            const double tt = t + static_cast<double>(k) * fc.step_s;
            last_r0_forecast_[site + "@" + std::to_string(static_cast<long>(tt / cfg_.tier1_tick_s))] = series[k];
        }
    }

    // Passes already being worked are kept; everything else is replanned.
    std::vector<mpc::SiteBooking> committed;
    std::map<int, mpc::PlanAction> keep;
    for (const auto& [sat, plan] : plans_) {
        if (const auto* a = plan.downlink_at(t); a != nullptr && t > a->t_start) {
            keep[sat] = *a;
            committed.push_back({a->site_id, t, a->t_end});
        }
    }
    std::vector<orbits::ContactWindow> ws;
    for (const auto& w : ogs_windows_) {
        if (w.t_set <= t || w.t_rise >= t1) {
            continue;
        }
        if (auto it = keep.find(w.sat_id); it != keep.end() && w.t_rise < it->second.t_end) {
            continue;
        }
        ws.push_back(w);
    }
    mpc::ContactForecast f;
    f.key_bits = [&](int sat, const std::string& site, double a, double b) {
        if (fc.cloud_during(site, a, b)) {
            // Only the clear part of the window counts.
            double bits = 0.0;
            const double step = 30.0;
            for (double x = a; x < b; x += step) {
                const double y = std::min(b, x + step);
                if (!fc.cloud_during(site, x, y)) {
                    bits += expected_key_bits(sat, site, x, y);
                }
            }
            return bits;
        }
        return expected_key_bits(sat, site, a, b);
    };
    const bool aware = carbon_aware();
    f.site_ci = [&, aware](const std::string& site, double tt) {
        return aware ? fc.ci_at(region_of(site), tt) : 0.0;
    };
    f.in_eclipse = [&](int sat, double tt) {
        return orbits::in_eclipse(constellation_.state(sat, tt), tt, cfg_.constellation.sun_longitude0_deg);
    };
    if (aware) {
        f.carbon_weight = cfg_.control.carbon_weight;
        f.carbon_grams = [&](const std::string& site, double a, double b) {
            const auto* sc = site_cfg_.at(site);
            return net::carbon_grams(sc->terminal_power_w, fc.ci_at(sc->region, 0.5 * (a + b)), b - a);
        };
    }
    std::map<int, mpc::EnergyModel> energy;
    for (const auto& [sat, soc] : soc_) {
        mpc::EnergyModel e = cfg_.energy;
        e.soc_wh = soc;
        e.step_s = cfg_.tier1_tick_s;
        energy[sat] = e;
    }
    auto plans = mpc::plan_contacts(ws, f, energy, t, t1, terminals_, committed);
    for (auto& [sat, a] : keep) {
        plans[sat].actions.push_back(a);
        std::stable_sort(plans[sat].actions.begin(), plans[sat].actions.end(),
                         [](const auto& x, const auto& y) { return x.t_start < y.t_start; });
    }
    plans_ = std::move(plans);
    for (const auto& [sat, plan] : plans_) {
        for (const auto& a : plan.actions) {
            if (a.kind == mpc::ActionKind::Downlink && a.t_start >= t && a.t_start < t + cfg_.tier1_tick_s) {
                emit(t, Category::Control, "plan_downlink",
                     {{"sat", sat}, {"site", a.site_id}, {"t_start", a.t_start}, {"t_end", a.t_end}});
            }
        }
    }
}

void Engine::run_mpc(double t) {
    const int H = cfg_.control.mpc_horizon;
    const double T = cfg_.tier1_tick_s;
    const auto& e = cfg_.energy;
    const double soc_target = cfg_.control.soc_target_frac * e.capacity_wh;
    const double key_target = std::max(1.0, type_i_rate_ * cfg_.control.key_target_s / 1e6);
    double stock_mbit = 0.0;
    for (const auto& o : ogs_) {
        stock_mbit += ledger_.stored_bits(o) / 1e6;
    }
    for (const auto& [sat, plan] : plans_) {
        // Next downlink of this sat within the horizon.
        const mpc::PlanAction* next = nullptr;
        for (const auto& a : plan.actions) {
            if (a.kind == mpc::ActionKind::Downlink && a.t_end > t && a.t_start < t + H * T) {
                next = &a;
                break;
            }
        }
        if (next == nullptr) {
            mpc_level_[sat] = mpc::LaserLevel::Nominal;
            continue;
        }
        mpc::MpcProblem p;
        p.horizon = H;
        p.A = mpc::Matrix::Identity(2, 2);
        p.B = mpc::Matrix::Zero(2, 1);
        p.Q = mpc::Matrix::Zero(2, 2);
        p.Q(0, 0) = 1.0 / (e.capacity_wh * e.capacity_wh);
        // A key surplus costs nothing, so the key term only acts below target.
        p.Q(1, 1) = stock_mbit < key_target ? 1.0 / (key_target * key_target) : 0.0;
        p.R = mpc::Matrix::Constant(1, 1, 1e-3);
        p.u_min = mpc::Vector::Constant(1, -0.5);
        p.u_max = mpc::Vector::Constant(1, 0.5);
        p.x_min = mpc::Vector(2);
        p.x_min << e.reserve_wh - soc_target, -1e12;
        p.x_max = mpc::Vector(2);
        p.x_max << 1e12, 1e12;
        p.max_iterations = 3000;
        p.tolerance = 1e-7;
        for (int k = 0; k < H; ++k) {
            const double a = t + k * T;
            const double b = a + T;
            const double on = std::max(0.0, std::min(b, next->t_end) - std::max(a, next->t_start)) / T;
            const double skr = on > 0.0 ? nominal_skr(sat, next->site_id, 0.5 * (a + b), true) : 0.0;
            mpc::Matrix Bk(2, 1);
            Bk << -e.laser_load_w * on * T / 3600.0, skr * on * T / 1e6;
            const bool sunlit = !orbits::in_eclipse(constellation_.state(sat, a), a,
                                                    cfg_.constellation.sun_longitude0_deg);
            mpc::Vector d(2);
            d << ((sunlit ? e.solar_w : 0.0) - e.bus_load_w) * T / 3600.0, -type_i_rate_ * T / 1e6;
            p.B_steps.push_back(Bk);
            p.disturbance.push_back(d + Bk.col(0));   // nominal power is u = 0
        }
        mpc::Vector x0(2);
        x0 << soc_[sat] - soc_target, stock_mbit - key_target;
        const auto sol = mpc::solve_mpc(p, x0);
        mpc::LaserLevel level = mpc::LaserLevel::Low;
        if (sol.status != mpc::MpcStatus::Infeasible) {
            const double u = 1.0 + sol.u[0](0);
            level = u < 0.75 ? mpc::LaserLevel::Low : (u < 1.25 ? mpc::LaserLevel::Nominal : mpc::LaserLevel::Turbo);
        }
        if (level != mpc_level_[sat]) {
            emit(t, Category::Control, "mpc_level",
                 {{"sat", sat}, {"level", mpc::to_string(level)}, {"status", mpc::to_string(sol.status)},
                  {"iterations", sol.iterations}});
        }
        mpc_level_[sat] = level;
    }
}

void Engine::defer_bulk(double t) {
    std::vector<net::FlowDemand> fresh;
    for (auto& f : sat_flows_) {
        if (f.demand.cls == net::TrafficClass::TypeIV && !f.started && !f.deferred &&
            f.demand.start_s >= t && f.demand.start_s < t + cfg_.tier1_tick_s) {
            fresh.push_back(f.demand);
        }
    }
    if (fresh.empty() || !carbon_aware()) {
        return;
    }
    // Transmit windows: an OGS and the HAPS see the same satellite.
    std::vector<mpc::TransmitWindow> tws;
    for (const auto& o : ogs_windows_) {
        for (const auto& h : haps_windows_) {
            if (o.sat_id != h.sat_id) {
                continue;
            }
            const double a = std::max(o.t_rise, h.t_rise) + cfg_.geometry_step_s;
            const double b = std::min(o.t_set, h.t_set) - cfg_.geometry_step_s;
            if (b > a && b > t) {
                tws.push_back({std::max(a, t), b, region_of(o.site_id)});
            }
        }
    }
    std::sort(tws.begin(), tws.end(), [](const auto& x, const auto& y) {
        return std::tie(x.t_start, x.t_end, x.region_id) < std::tie(y.t_start, y.t_end, y.region_id);
    });
    double epb = 0.0;
    for (const auto& o : ogs_) {
        epb = std::max(epb, site_cfg_.at(o)->energy_per_bit_j);
    }
    const auto ci = [&](const std::string& r, double tt) { return cfg_.carbon.ci(r, tt); };
    std::string def_region;
    if (!ogs_.empty()) {
        def_region = region_of(nearest_key_store(cfg_, fresh.front().src));
        if (def_region.empty()) {
            def_region = region_of(ogs_.front());
        }
    }
    for (const auto& fl : fresh) {
        const auto d = mpc::carbon_aware_defer({fl}, tws, epb * fl.data_rate_bps, ci, def_region,
                                               cfg_.tier1_tick_s);
        for (auto& f : sat_flows_) {
            if (f.demand.flow_id == d.front().flow_id) {
                f.start_at = d.front().t_start;
                f.deferred = true;
                f.next_rekey = f.start_at;
                emit(t, Category::Control, "defer",
                     {{"flow", f.demand.flow_id},
                      {"t_start", f.start_at},
                      {"region", d.front().region_id},
                      {"forecast_g", d.front().forecast_grams},
                      {"moved", d.front().deferred}});
            }
        }
    }
}

void Engine::telemetry(double t) {
    std::vector<net::NodeState> nodes;
    for (const auto& o : ogs_) {
        net::NodeState n;
        n.node_id = o;
        n.kind = net::NodeKind::Ogs;
        n.carbon_region = region_of(o);
        n.key_buffers["kms"] = ledger_.stored_bits(o);
        nodes.push_back(n);
    }
    for (const auto& [sat, soc] : soc_) {
        net::NodeState n;
        n.node_id = net::sat_name(sat);
        n.kind = net::NodeKind::Satellite;
        n.battery_soc_wh = soc;
        n.battery_capacity_wh = cfg_.energy.capacity_wh;
        nodes.push_back(n);
    }
    std::vector<net::EdgeState> edges;
    for (const auto& [id, d] : downlinks_) {
        net::EdgeState e;
        e.edge_id = id;
        e.kind = net::EdgeKind::FsoGroundSat;
        e.a = d.ogs;
        e.b = net::sat_name(d.sat);
        net::ChannelSample cs;
        cs.qber = d.samples > 0 ? d.qber_sum / static_cast<double>(d.samples) : d.qber;
        e.sample = cs;
        edges.push_back(e);
    }
    sdqn::TelemetryContext ctx;
    ctx.t = t;
    ctx.edges = &edges;
    ctx.turbulence_index = [&](const std::string& node) {
        auto it = seeing_.find(node);
        return it == seeing_.end() ? 0.0 : std::exp(it->second.mean);
    };
    ctx.carbon_intensity = [&](const std::string& node) { return ci_of(node, t); };
    for (const auto& r : sdqn::collect_telemetry(nodes, ctx)) {
        emit(t, Category::Control, "telemetry", {{"record", json::parse(sdqn::serialize(r))}});
    }
}

void Engine::control_tick(double t) {
    if (t > 0.0) {
        const auto tot = ledger_.totals();
        json rec;
        rec["dt"] = cfg_.tier1_tick_s;
        rec["secure_bits"] = acc_.secure_bits;
        rec["demand_bits"] = acc_.demand_bits;
        rec["delivered_bits"] = acc_.delivered_bits;
        rec["latency_s"] = acc_.delivered_bits > 0.0 ? acc_.latency_bits / acc_.delivered_bits : 0.0;
        rec["carbon_g"] = acc_.carbon_g;
        const double dt2 = cfg_.tier2_tick_s;
        rec["availability"] = acc_.type_i_active_steps > 0
                                  ? static_cast<double>(acc_.type_i_keyed_steps) /
                                        static_cast<double>(acc_.type_i_active_steps)
                                  : 1.0;
        rec["type_i_active_s"] = static_cast<double>(acc_.type_i_active_steps) * dt2;
        rec["type_i_keyed_s"] = static_cast<double>(acc_.type_i_keyed_steps) * dt2;
        rec["type_i_scheduled_steps"] = acc_.scheduled;
        rec["type_i_violations"] = acc_.violations;
        rec["type_i_outages"] = acc_.outages;
        rec["shield_overrides"] = acc_.overrides;
        rec["key_generated_bits"] = tot.generated - key_gen_mark_;
        rec["key_consumed_bits"] = tot.consumed - key_used_mark_;
        rec["key_expired_bits"] = tot.expired - key_exp_mark_;
        rec["type_i_latency_max_s"] = acc_.type_i_latency_max;
        rec["type_ii_latency_max_s"] = acc_.type_ii_latency_max;
        json stores = json::object();
        for (const auto& o : ogs_) {
            stores[o] = ledger_.stored_bits(o);
        }
        rec["key_stores"] = stores;
        json soc = json::object();
        for (const auto& [sat, s] : soc_) {
            soc[net::sat_name(sat)] = s;
        }
        rec["soc_wh"] = soc;
        for (auto& [id, d] : downlinks_) {
            if (d.samples > 0) {
                emit(t, Category::Channel, "link",
                     {{"link", id},
                      {"mean_skr_bps", d.skr_sum / static_cast<double>(d.samples)},
                      {"mean_qber", d.qber_sum / static_cast<double>(d.samples)},
                      {"mode", proto::to_string(d.fallback.mode)},
                      {"level", mpc::to_string(d.level)}});
            }
            d.skr_sum = d.qber_sum = 0.0;
            d.samples = 0;
        }
        if (acc_.violations > 0) {
            emit(t, Category::Violation, "type_i_starved_schedule", {{"count", acc_.violations}});
        }
        emit(t, Category::Control, "tick", rec);
        key_gen_mark_ = tot.generated;
        key_used_mark_ = tot.consumed;
        key_exp_mark_ = tot.expired;
        acc_ = TickAcc{};
    }
    if (t + 0.5 * cfg_.tier1_tick_s > duration_) {
        return;
    }
    // Key shelf life.
    for (const auto& o : ogs_) {
        const int n = ledger_.expire_older_than(o, cfg_.control.key_shelf_life_s, t);
        if (n > 0) {
            emit(t, Category::Key, "expired", {{"store", o}, {"blocks", n}});
        }
    }
    // Seeing monitors feed the per-site log r0 filters.
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (const auto& o : ogs_) {
        auto& k = seeing_[o];
        const double r0 = obs::truth_r0(weather_.at(o, t), cfg_.physics.weather_layer_km,
                                        cfg_.physics.geometry.wavelength_nm);
        obs::SeeingMeasurement m;
        m.site_id = o;
        m.t = t;
        m.r0_measured_m = r0 * std::exp(cfg_.control.seeing_noise_frac * gauss(rng_seeing_));
        m.noise_sigma_m = std::max(1e-6, cfg_.control.seeing_noise_frac * m.r0_measured_m);
        k = obs::kalman_predict(k, t - k.last_update);
        k = obs::kalman_update(k, m);
        k.last_update = t;
    }
    // Type-I data path: shortest terrestrial route.
    if (!type_i_.empty()) {
        const auto& f = type_i_.front();
        auto r = rl::baseline_shortest_path(graph_, f.src, f.dst);
        type_i_path_ = r ? r->nodes : std::vector<std::string>{};
        type_i_latency_ = r ? r->latency_s : 0.0;
    }
    if (ai()) {
        plan(t);
        run_mpc(t);
    }
    defer_bulk(t);
    telemetry(t);
    queue_.push(t + cfg_.tier1_tick_s, Category::Control, [this](double tt) { control_tick(tt); });
}

RunResult Engine::run() {
    sats_ = orbits::propagate(constellation_, 0.0);
    graph_ = net::snapshot(
        0.0, topo_, constellation_, sats_,
        [&](const std::string& s, double tt) { return weather_.at(s, tt); }, cfg_.physics, nullptr);
    emit(0.0, Category::Control, "start",
         {{"ogs", ogs_}, {"critical_key_bits", critical_bits_}, {"baseline_store", baseline_store_},
          {"policy_theta", std::vector<double>(policy_.theta.begin(), policy_.theta.end())}});
    for (const auto& f : type_i_) {
        emit(0.0, Category::Flow, "type_i", {{"flow", f.flow_id}, {"src", f.src}, {"dst", f.dst},
                                              {"rate_bps", f.data_rate_bps}, {"start_s", f.start_s},
                                              {"end_s", f.end_s()}});
    }
    queue_.push(0.0, Category::Control, [this](double tt) { control_tick(tt); });
    queue_.push(cfg_.geometry_step_s, Category::Channel, [this](double tt) {
        geometry_clock_ = tt;
        geometry_step(tt);
    });
    // Every geometry event updates the clock used for record stamps.
    while (!queue_.empty()) {
        const double tn = queue_.next_time();
        geometry_clock_ = tn;
        queue_.run_until(tn);
    }
    RunResult r;
    r.trace = trace_.text();
    r.trace_hash = fnv1a_hex(r.trace);
    r.summary = compute_metrics(parse_trace_text(r.trace));
    r.learning_curve = training_.curve;
    r.policy = policy_;
    return r;
}

} // namespace

RunResult run_simulation(const SimConfig& cfg, const RunOptions& opt) {
    Engine e(cfg, opt);
    return e.run();
}

} // namespace qntn::sim
