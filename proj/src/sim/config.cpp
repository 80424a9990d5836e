#include "qntn/sim/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace qntn::sim {

using nlohmann::json;
namespace fs = std::filesystem;

const char* to_string(ControllerKind c) {
    switch (c) {
    case ControllerKind::Ai: return "ai";
    case ControllerKind::BaselineShortestPath: return "baseline-shortest-path";
    case ControllerKind::CarbonBlindAi: return "carbon-blind-ai";
    }
    return "?";
}

ControllerKind controller_from_string(const std::string& s) {
    if (s == "ai") {
        return ControllerKind::Ai;
    }
    if (s == "baseline-shortest-path") {
        return ControllerKind::BaselineShortestPath;
    }
    if (s == "carbon-blind-ai") {
        return ControllerKind::CarbonBlindAi;
    }
    throw ConfigError("unknown controller '" + s + "'");
}

namespace {

// Reads fields of one JSON object and rejects keys nobody asked for.
class Obj {
public:
    Obj(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) {
            throw ConfigError(where_ + ": expected an object");
        }
    }
    ~Obj() noexcept(false) {
        if (std::uncaught_exceptions() > 0) {
            return;
        }
        for (const auto& [k, v] : j_.items()) {
            if (seen_.count(k) == 0) {
                throw ConfigError(where_ + ": unknown key '" + k + "'");
            }
        }
    }
    Obj(const Obj&) = delete;
    Obj& operator=(const Obj&) = delete;

    bool has(const std::string& k) {
        seen_.insert(k);
        return j_.contains(k);
    }
    const json& at(const std::string& k) {
        if (!has(k)) {
            throw ConfigError(where_ + ": missing key '" + k + "'");
        }
        return j_.at(k);
    }
    std::string path(const std::string& k) const { return where_ + "." + k; }

    template <class T>
    void opt(const std::string& k, T& out) {
        if (!has(k)) {
            return;
        }
        try {
            out = j_.at(k).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(path(k) + ": " + e.what());
        }
    }
    template <class T>
    T req(const std::string& k) {
        const json& v = at(k);
        try {
            return v.get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(path(k) + ": " + e.what());
        }
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

orbits::SiteKind site_kind(const std::string& s, const std::string& where) {
    if (s == "industrial") {
        return orbits::SiteKind::Industrial;
    }
    if (s == "ogs") {
        return orbits::SiteKind::Ogs;
    }
    if (s == "haps") {
        return orbits::SiteKind::Haps;
    }
    if (s == "haps_anchor") {
        return orbits::SiteKind::HapsAnchor;
    }
    throw ConfigError(where + ": unknown site kind '" + s + "'");
}

net::EdgeKind edge_kind(const std::string& s, const std::string& where) {
    if (s == "fiber") {
        return net::EdgeKind::Fiber;
    }
    if (s == "qcx") {
        return net::EdgeKind::QuantumCoexist;
    }
    if (s == "rf") {
        return net::EdgeKind::Rf;
    }
    if (s == "oisl") {
        return net::EdgeKind::Oisl;
    }
    if (s == "fso") {
        return net::EdgeKind::FsoGroundSat;
    }
    throw ConfigError(where + ": unknown edge kind '" + s + "'");
}

net::SiteWeather read_weather(const json& j, const std::string& where, net::SiteWeather w) {
    Obj o(j, where);
    o.opt("cloud", w.cloud);
    o.opt("heavy_rain", w.heavy_rain);
    o.opt("extinction_db_per_km", w.extinction_db_per_km);
    o.opt("rytov_zenith", w.rytov_zenith);
    return w;
}

net::TrafficClass read_class(Obj& o, const std::string& k) {
    const auto s = o.req<std::string>(k);
    try {
        return net::traffic_class_from_string(s);
    } catch (const std::exception& e) {
        throw ConfigError(o.path(k) + ": " + e.what());
    }
}

void read_constellation(const json& j, orbits::ConstellationSpec& c) {
    Obj o(j, "constellation");
    o.opt("planes", c.planes);
    o.opt("sats_per_plane", c.sats_per_plane);
    o.opt("altitude_km", c.altitude_km);
    o.opt("inclination_deg", c.inclination_deg);
    o.opt("phasing_factor", c.phasing_factor);
    o.opt("epoch_s", c.epoch_s);
    o.opt("raan0_deg", c.raan0_deg);
    o.opt("anomaly0_deg", c.anomaly0_deg);
    o.opt("earth_angle0_deg", c.earth_angle0_deg);
    o.opt("sun_longitude0_deg", c.sun_longitude0_deg);
}

SiteConfig read_site(const json& j, size_t i) {
    const std::string where = "sites[" + std::to_string(i) + "]";
    Obj o(j, where);
    SiteConfig s;
    s.site.site_id = o.req<std::string>("id");
    s.site.kind = site_kind(o.req<std::string>("kind"), where);
    s.site.latitude_deg = o.req<double>("lat_deg");
    s.site.longitude_deg = o.req<double>("lon_deg");
    o.opt("alt_km", s.site.altitude_km);
    o.opt("mask_deg", s.site.min_elevation_deg);
    o.opt("region", s.region);
    o.opt("terminals", s.terminals);
    o.opt("rf", s.rf);
    o.opt("idle_power_w", s.idle_power_w);
    o.opt("terminal_power_w", s.terminal_power_w);
    o.opt("energy_per_bit_j", s.energy_per_bit_j);
    return s;
}

net::StaticEdge read_edge(const json& j, size_t i) {
    const std::string where = "static_edges[" + std::to_string(i) + "]";
    Obj o(j, where);
    net::StaticEdge e;
    e.a = o.req<std::string>("a");
    e.b = o.req<std::string>("b");
    e.kind = edge_kind(o.req<std::string>("kind"), where);
    e.length_km = o.req<double>("length_km");
    o.opt("capacity_bps", e.capacity_bps);
    o.opt("skr_bps", e.skr_bps);
    return e;
}

void read_weather_config(const json& j, WeatherConfig& w) {
    Obj o(j, "weather");
    if (o.has("baseline")) {
        w.baseline = read_weather(j.at("baseline"), "weather.baseline", w.baseline);
    }
    if (o.has("sites")) {
        for (const auto& [id, v] : j.at("sites").items()) {
            w.site_baseline[id] = read_weather(v, "weather.sites." + id, w.baseline);
        }
    }
    if (o.has("intervals")) {
        size_t i = 0;
        for (const auto& v : j.at("intervals")) {
            const std::string where = "weather.intervals[" + std::to_string(i++) + "]";
            Obj io(v, where);
            net::WeatherInterval iv;
            iv.site_id = io.req<std::string>("site");
            iv.t0 = io.req<double>("t0_s");
            iv.t1 = io.req<double>("t1_s");
            iv.weather = w.baseline;
            if (io.has("weather")) {
                iv.weather = read_weather(v.at("weather"), where + ".weather", w.baseline);
            }
            w.intervals.push_back(iv);
        }
    }
    if (o.has("front")) {
        Obj f(j.at("front"), "weather.front");
        auto& fr = w.front;
        fr.enabled = true;
        f.opt("start_s", fr.start_s);
        f.opt("start_jitter_s", fr.start_jitter_s);
        f.opt("speed_kmh", fr.speed_kmh);
        f.opt("origin_lon_deg", fr.origin_lon_deg);
        f.opt("turbulence_s", fr.turbulence_s);
        f.opt("cloud_s", fr.cloud_s);
        f.opt("rytov_zenith", fr.rytov_zenith);
        f.opt("extinction_db_per_km", fr.extinction_db_per_km);
        f.opt("sites", fr.sites);
    }
}

void read_traffic(const json& j, net::TrafficSpec& t) {
    Obj o(j, "traffic");
    if (o.has("flows")) {
        size_t i = 0;
        for (const auto& v : j.at("flows")) {
            Obj fo(v, "traffic.flows[" + std::to_string(i++) + "]");
            net::ScheduledEvent e;
            e.src = fo.req<std::string>("src");
            e.dst = fo.req<std::string>("dst");
            e.cls = read_class(fo, "class");
            e.start_s = fo.req<double>("start_s");
            e.duration_s = fo.req<double>("duration_s");
            e.data_rate_bps = fo.req<double>("rate_bps");
            fo.opt("deadline_s", e.deadline_s);
            fo.opt("forbidden_regions", e.forbidden_regions);
            t.persistent.push_back(e);
        }
    }
    if (o.has("poisson")) {
        size_t i = 0;
        for (const auto& v : j.at("poisson")) {
            Obj po(v, "traffic.poisson[" + std::to_string(i++) + "]");
            net::PoissonStream p;
            p.cls = read_class(po, "class");
            p.arrivals_per_hour = po.req<double>("arrivals_per_hour");
            po.opt("mean_duration_s", p.mean_duration_s);
            po.opt("rate_bps", p.data_rate_bps);
            po.opt("endpoints", p.endpoints);
            po.opt("deadline_slack_s", p.deadline_slack_s);
            t.poisson.push_back(p);
        }
    }
}

void read_physics(const json& j, SimConfig& c) {
    Obj o(j, "physics");
    net::LinkPhysics& p = c.physics;
    o.opt("scintillation_rho", c.scintillation_rho);
    if (o.has("geometry")) {
        Obj g(j.at("geometry"), "physics.geometry");
        g.opt("wavelength_nm", p.geometry.wavelength_nm);
        g.opt("tx_aperture_m", p.geometry.tx_aperture_m);
        g.opt("rx_aperture_m", p.geometry.rx_aperture_m);
        g.opt("divergence_urad", p.geometry.divergence_urad);
        g.opt("pointing_jitter_sigma_urad", p.geometry.pointing_jitter_sigma_urad);
    }
    if (o.has("qkd")) {
        Obj q(j.at("qkd"), "physics.qkd");
        q.opt("pulse_rate_hz", p.qkd.pulse_rate_hz);
        q.opt("sift_factor", p.qkd.sift_factor);
        q.opt("detector_efficiency", p.qkd.detector_efficiency);
        q.opt("dark_count_rate_hz", p.qkd.dark_count_rate_hz);
        q.opt("intrinsic_error", p.qkd.intrinsic_error);
        q.opt("ec_inefficiency", p.qkd.ec_inefficiency);
    }
    if (o.has("rf")) {
        Obj r(j.at("rf"), "physics.rf");
        r.opt("nominal_capacity_bps", p.rf.nominal_capacity_bps);
        r.opt("rain_factor", p.rf.rain_factor);
        r.opt("max_range_km", p.rf.max_range_km);
    }
    o.opt("weather_layer_km", p.weather_layer_km);
    o.opt("haps_rytov", p.haps_rytov);
    o.opt("haps_extinction_db_per_km", p.haps_extinction_db_per_km);
    o.opt("fso_capacity_bps", p.fso_capacity_bps);
    o.opt("oisl_capacity_bps", p.oisl_capacity_bps);
    o.opt("fiber_refractive_index", p.fiber_refractive_index);
}

void read_control(const json& j, ControlConfig& c) {
    Obj o(j, "control");
    o.opt("critical_threshold_factor", c.critical_threshold_factor);
    o.opt("handover_lead_s", c.handover_lead_s);
    o.opt("switch_buffer_s", c.switch_buffer_s);
    o.opt("serialization_delay_s", c.serialization_delay_s);
    o.opt("switch_guard_s", c.switch_guard_s);
    o.opt("carbon_weight", c.carbon_weight);
    o.opt("mpc_horizon", c.mpc_horizon);
    o.opt("soc_target_frac", c.soc_target_frac);
    o.opt("key_target_s", c.key_target_s);
    o.opt("turbo_window_s", c.turbo_window_s);
    o.opt("turbo_margin", c.turbo_margin);
    o.opt("fallback_hysteresis_db", c.fallback_hysteresis_db);
    o.opt("fallback_dwell_s", c.fallback_dwell_s);
    o.opt("key_shelf_life_s", c.key_shelf_life_s);
    o.opt("initial_key_bits", c.initial_key_bits);
    o.opt("acquisition_s", c.acquisition_s);
    o.opt("seeing_noise_frac", c.seeing_noise_frac);
    o.opt("shield", c.shield);
    if (o.has("rl")) {
        Obj r(j.at("rl"), "control.rl");
        r.opt("episodes", c.rl.episodes);
        r.opt("learning_rate", c.rl.learning_rate);
        if (r.has("mode")) {
            const auto m = j.at("rl").at("mode").get<std::string>();
            if (m != "greedy" && m != "stochastic") {
                throw ConfigError("control.rl.mode: expected greedy or stochastic");
            }
            c.rl.greedy = m == "greedy";
        }
        if (r.has("weights")) {
            c.rl.weights = policy_from_json(j.at("rl").at("weights"));
        }
    }
    if (o.has("forecast")) {
        Obj f(j.at("forecast"), "control.forecast");
        f.opt("step_s", c.forecast.step_s);
        f.opt("r0_log_sigma", c.forecast.r0_log_sigma);
        f.opt("nowcast_lead_s", c.forecast.nowcast_lead_s);
        f.opt("cloud_timing_sigma_s", c.forecast.cloud_timing_sigma_s);
        f.opt("ci_noise_frac", c.forecast.ci_noise_frac);
    }
}

void require(bool ok, const std::string& msg) {
    if (!ok) {
        throw ConfigError(msg);
    }
}

} // namespace

rl::Policy policy_from_json(const json& j) {
    Obj o(j, "control.rl.weights");
    rl::Policy p;
    const auto theta = o.req<std::vector<double>>("theta");
    require(theta.size() == p.theta.size(), "control.rl.weights.theta: expected " +
                                                std::to_string(p.theta.size()) + " values");
    std::copy(theta.begin(), theta.end(), p.theta.begin());
    if (o.has("laser_theta")) {
        const auto lt = j.at("laser_theta").get<std::vector<std::vector<double>>>();
        require(lt.size() == p.laser_theta.size(), "control.rl.weights.laser_theta: bad shape");
        for (size_t i = 0; i < lt.size(); ++i) {
            require(lt[i].size() == p.laser_theta[i].size(),
                    "control.rl.weights.laser_theta: bad shape");
            std::copy(lt[i].begin(), lt[i].end(), p.laser_theta[i].begin());
        }
    }
    o.opt("queue_scale_bits", p.scales.queue_bits);
    o.opt("key_scale_bits", p.scales.key_bits);
    return p;
}

json policy_to_json(const rl::Policy& p) {
    json j;
    j["theta"] = std::vector<double>(p.theta.begin(), p.theta.end());
    json lt = json::array();
    for (const auto& row : p.laser_theta) {
        lt.push_back(std::vector<double>(row.begin(), row.end()));
    }
    j["laser_theta"] = lt;
    j["queue_scale_bits"] = p.scales.queue_bits;
    j["key_scale_bits"] = p.scales.key_bits;
    return j;
}

SimConfig config_from_json(const json& j, const std::string& base_dir) {
    SimConfig c;
    c.base_dir = base_dir;
    {
        Obj o(j, "config");
        c.format_version = o.req<int>("format_version");
        if (c.format_version != kConfigFormatVersion) {
            throw ConfigError("format_version " + std::to_string(c.format_version) +
                              " is not supported (expected " +
                              std::to_string(kConfigFormatVersion) + ")");
        }
        c.name = o.req<std::string>("name");
        o.opt("duration_s", c.duration_s);
        if (o.has("ticks")) {
            Obj t(j.at("ticks"), "ticks");
            t.opt("tier1_s", c.tier1_tick_s);
            t.opt("tier2_s", c.tier2_tick_s);
            t.opt("geometry_s", c.geometry_step_s);
        }
        if (o.has("controller")) {
            c.controller = controller_from_string(j.at("controller").get<std::string>());
        }
        o.opt("seeds", c.seeds);
        if (o.has("constellation")) {
            read_constellation(j.at("constellation"), c.constellation);
        }
        o.opt("intra_plane_isl", c.intra_plane_isl);
        size_t i = 0;
        for (const auto& s : o.at("sites")) {
            c.sites.push_back(read_site(s, i++));
        }
        if (o.has("static_edges")) {
            i = 0;
            for (const auto& e : j.at("static_edges")) {
                c.static_edges.push_back(read_edge(e, i++));
            }
        }
        {
            Obj co(o.at("carbon"), "carbon");
            const auto csv = co.req<std::string>("csv");
            fs::path p(csv);
            if (p.is_relative()) {
                p = fs::path(base_dir) / p;
            }
            c.ci_csv = p.lexically_normal().string();
        }
        if (o.has("weather")) {
            read_weather_config(j.at("weather"), c.weather);
        }
        if (o.has("traffic")) {
            read_traffic(j.at("traffic"), c.traffic);
        }
        if (o.has("physics")) {
            read_physics(j.at("physics"), c);
        }
        if (o.has("memory")) {
            Obj m(j.at("memory"), "memory");
            m.opt("t2_s", c.memory.t2_s);
            m.opt("f_min", c.memory.f_min);
            m.opt("capacity", c.memory.capacity);
        }
        if (o.has("energy")) {
            Obj e(j.at("energy"), "energy");
            e.opt("capacity_wh", c.energy.capacity_wh);
            e.opt("reserve_wh", c.energy.reserve_wh);
            e.opt("soc_wh", c.energy.soc_wh);
            e.opt("bus_load_w", c.energy.bus_load_w);
            e.opt("sleep_load_w", c.energy.sleep_load_w);
            e.opt("laser_load_w", c.energy.laser_load_w);
            e.opt("solar_w", c.energy.solar_w);
        }
        if (o.has("objective")) {
            Obj w(j.at("objective"), "objective");
            w.opt("w1", c.objective.w1);
            w.opt("w2", c.objective.w2);
            w.opt("w3", c.objective.w3);
            w.opt("w4", c.objective.w4);
            w.opt("gamma", c.objective.gamma);
        }
        if (o.has("reward")) {
            Obj r(j.at("reward"), "reward");
            r.opt("alpha_r", c.reward.alpha_r);
            r.opt("beta_r", c.reward.beta_r);
            r.opt("gamma_r", c.reward.gamma_r);
            r.opt("delta_r", c.reward.delta_r);
        }
        if (o.has("control")) {
            read_control(j.at("control"), c.control);
        }
    }
    c.traffic.horizon_s = c.duration_s;
    c.energy.step_s = c.tier1_tick_s;
    return c;
}

SimConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config " + path);
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    const auto dir = fs::path(path).parent_path().string();
    SimConfig c = config_from_json(j, dir.empty() ? "." : dir);
    try {
        c.carbon = net::load_ci_csv_file(c.ci_csv);
    } catch (const std::exception& e) {
        throw ConfigError("carbon.csv: " + std::string(e.what()));
    }
    c.validate();
    return c;
}

const SiteConfig* SimConfig::site(const std::string& id) const {
    for (const auto& s : sites) {
        if (s.site.site_id == id) {
            return &s;
        }
    }
    return nullptr;
}

net::Topology SimConfig::topology() const {
    net::Topology t;
    for (const auto& s : sites) {
        t.sites.push_back(s.site);
        if (s.rf) {
            t.rf_terminals.insert(s.site.site_id);
        }
    }
    t.static_edges = static_edges;
    t.intra_plane_isl = intra_plane_isl;
    return t;
}

void SimConfig::validate() const {
    auto fin = [](double v) { return std::isfinite(v); };
    require(!name.empty(), "name must not be empty");
    require(fin(duration_s) && duration_s > 0.0, "duration_s must be positive");
    require(fin(tier2_tick_s) && tier2_tick_s > 0.0, "ticks.tier2_s must be positive");
    require(fin(geometry_step_s) && geometry_step_s >= tier2_tick_s,
            "ticks.geometry_s must be at least ticks.tier2_s");
    require(fin(tier1_tick_s) && tier1_tick_s >= geometry_step_s,
            "ticks.tier1_s must be at least ticks.geometry_s");
    auto multiple = [](double big, double small) {
        const double r = big / small;
        return std::abs(r - std::round(r)) < 1e-9 * std::max(1.0, r);
    };
    require(multiple(geometry_step_s, tier2_tick_s), "ticks.geometry_s must be a multiple of tier2_s");
    require(multiple(tier1_tick_s, geometry_step_s), "ticks.tier1_s must be a multiple of geometry_s");
    require(!seeds.empty(), "seeds must not be empty");
    require(scintillation_rho >= 0.0 && scintillation_rho < 1.0,
            "physics.scintillation_rho must be in [0, 1)");
    try {
        constellation.validate();
        physics.qkd.validate();
        memory.validate();
        reward.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }

    std::set<std::string> ids;
    bool has_ogs = false;
    for (const auto& s : sites) {
        try {
            s.site.validate();
        } catch (const std::exception& e) {
            throw ConfigError("site " + s.site.site_id + ": " + e.what());
        }
        require(ids.insert(s.site.site_id).second, "duplicate site id " + s.site.site_id);
        require(s.site.site_id.rfind("sat-", 0) != 0, "site ids may not start with sat-");
        require(s.terminals >= 0, "site " + s.site.site_id + ": terminals must be >= 0");
        require(s.idle_power_w >= 0.0 && s.terminal_power_w >= 0.0 && s.energy_per_bit_j >= 0.0,
                "site " + s.site.site_id + ": powers must be >= 0");
        if (!s.region.empty()) {
            require(carbon.has(s.region),
                    "site " + s.site.site_id + ": region " + s.region + " missing from carbon csv");
        }
        if (s.site.kind == orbits::SiteKind::Ogs) {
            has_ogs = true;
            require(s.terminals >= 1, "ogs " + s.site.site_id + " needs at least one terminal");
        }
    }
    require(has_ogs, "at least one ogs site is required");
    for (const auto& e : static_edges) {
        require(ids.count(e.a) && ids.count(e.b),
                "static edge " + e.a + "-" + e.b + " references an unknown site");
        require(e.length_km >= 0.0 && e.capacity_bps > 0.0,
                "static edge " + e.a + "-" + e.b + ": bad length or capacity");
    }
    try {
        carbon.validate_coverage(0.0);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("carbon: ") + e.what());
    }
    for (const auto& iv : weather.intervals) {
        require(ids.count(iv.site_id), "weather interval references unknown site " + iv.site_id);
        require(iv.t1 > iv.t0, "weather interval for " + iv.site_id + " is empty");
    }
    for (const auto& [id, w] : weather.site_baseline) {
        require(ids.count(id), "weather.sites references unknown site " + id);
    }
    if (weather.front.enabled) {
        const auto& f = weather.front;
        require(f.speed_kmh > 0.0 && f.turbulence_s >= 0.0 && f.cloud_s >= 0.0 &&
                    f.start_jitter_s >= 0.0,
                "weather.front: speeds and durations must be non-negative");
        for (const auto& s : f.sites) {
            require(ids.count(s), "weather.front references unknown site " + s);
        }
    }
    for (const auto& f : traffic.persistent) {
        require(ids.count(f.src) && ids.count(f.dst),
                "flow " + f.src + "->" + f.dst + " references an unknown site");
        require(f.duration_s > 0.0 && f.data_rate_bps >= 0.0 && f.start_s >= 0.0,
                "flow " + f.src + "->" + f.dst + ": bad timing or rate");
    }
    for (const auto& p : traffic.poisson) {
        require(p.arrivals_per_hour >= 0.0 && p.mean_duration_s > 0.0 && p.data_rate_bps >= 0.0,
                "poisson stream: bad parameters");
        require(!p.endpoints.empty() || p.arrivals_per_hour == 0.0,
                "poisson stream needs endpoints");
        for (const auto& [a, b] : p.endpoints) {
            require(ids.count(a) && ids.count(b), "poisson endpoint references unknown site");
        }
    }
    require(energy.capacity_wh > 0.0 && energy.reserve_wh >= 0.0 &&
                energy.reserve_wh <= energy.soc_wh && energy.soc_wh <= energy.capacity_wh,
            "energy: need 0 <= reserve <= soc <= capacity");
    require(objective.gamma > 0.0 && objective.gamma <= 1.0, "objective.gamma must be in (0, 1]");
    const auto& k = control;
    require(k.critical_threshold_factor > 0.0, "control.critical_threshold_factor must be > 0");
    require(k.handover_lead_s > 0.0 && k.switch_guard_s >= 0.0 && k.switch_guard_s < k.handover_lead_s,
            "control: need 0 <= switch_guard_s < handover_lead_s");
    require(k.mpc_horizon >= 1, "control.mpc_horizon must be >= 1");
    require(k.soc_target_frac > 0.0 && k.soc_target_frac <= 1.0,
            "control.soc_target_frac must be in (0, 1]");
    require(k.carbon_weight >= 0.0, "control.carbon_weight must be >= 0");
    require(k.key_shelf_life_s > 0.0 && k.initial_key_bits >= 0.0,
            "control: shelf life must be > 0 and initial key stock >= 0");
    require(k.rl.episodes >= 1 && k.rl.learning_rate > 0.0, "control.rl: bad training parameters");
    require(k.acquisition_s >= 0.0, "control.acquisition_s must be >= 0");
}

} // namespace qntn::sim
