#include "qntn/netmodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace qntn::net {

const char* to_string(NodeKind k) {
    switch (k) {
    case NodeKind::Industrial: return "industrial";
    case NodeKind::Ogs: return "ogs";
    case NodeKind::Satellite: return "satellite";
    case NodeKind::Haps: return "haps";
    }
    return "?";
}

const char* to_string(EdgeKind k) {
    switch (k) {
    case EdgeKind::Fiber: return "fiber";
    case EdgeKind::FsoGroundSat: return "fso";
    case EdgeKind::Oisl: return "oisl";
    case EdgeKind::Rf: return "rf";
    case EdgeKind::QuantumCoexist: return "qcx";
    }
    return "?";
}

const char* to_string(EdgeStatus s) {
    switch (s) {
    case EdgeStatus::Up: return "up";
    case EdgeStatus::Degraded: return "degraded";
    case EdgeStatus::Down: return "down";
    }
    return "?";
}

const char* to_string(TrafficClass c) {
    switch (c) {
    case TrafficClass::TypeI: return "TypeI";
    case TrafficClass::TypeII: return "TypeII";
    case TrafficClass::TypeIII: return "TypeIII";
    case TrafficClass::TypeIV: return "TypeIV";
    }
    return "?";
}

const char* to_string(SecurityMode m) {
    switch (m) {
    case SecurityMode::Otp: return "OTP";
    case SecurityMode::Aes256Rekey: return "AES256-rekey";
    case SecurityMode::Aes128Batch: return "AES128-batch";
    case SecurityMode::Pqc: return "PQC";
    }
    return "?";
}

TrafficClass traffic_class_from_string(const std::string& s) {
    if (s == "TypeI") return TrafficClass::TypeI;
    if (s == "TypeII") return TrafficClass::TypeII;
    if (s == "TypeIII") return TrafficClass::TypeIII;
    if (s == "TypeIV") return TrafficClass::TypeIV;
    throw std::invalid_argument("unknown traffic class: " + s);
}

TrafficClassSpec class_spec(TrafficClass c) {
    TrafficClassSpec s;
    s.cls = c;
    switch (c) {
    case TrafficClass::TypeI:
        s.latency_target_s = 1e-3;
        s.reliability_target = 0.99999;
        s.security = SecurityMode::Otp;
        break;
    case TrafficClass::TypeII:
        s.latency_target_s = 50e-3;
        s.reliability_target = 0.99999;
        s.security = SecurityMode::Aes256Rekey;
        s.rekey_bits = 256.0;
        s.rekey_period_s = 10.0;
        break;
    case TrafficClass::TypeIII:
        s.latency_target_s = 10.0;
        s.reliability_target = 0.999;
        s.security = SecurityMode::Aes128Batch;
        s.rekey_bits = 128.0;
        s.rekey_period_s = 300.0;
        break;
    case TrafficClass::TypeIV:
        s.latency_target_s = std::numeric_limits<double>::infinity();
        s.reliability_target = 0.99;
        s.security = SecurityMode::Pqc;
        break;
    }
    return s;
}

double key_demand_bits(const TrafficClassSpec& spec, const FlowDemand& flow, double t0, double t1) {
    const double lo = std::max(t0, flow.start_s);
    const double hi = std::min(t1, flow.end_s());
    if (hi <= lo) {
        return 0.0;
    }
    switch (spec.security) {
    case SecurityMode::Otp:
        return flow.data_rate_bps * (hi - lo);
    case SecurityMode::Aes256Rekey:
    case SecurityMode::Aes128Batch: {
        // Rekeys at start + k*period; count those in [lo, hi).
        const double p = spec.rekey_period_s;
        const double first = std::ceil((lo - flow.start_s) / p - 1e-9);
        const double last = std::ceil((hi - flow.start_s) / p - 1e-9) - 1.0;
        return last >= first ? spec.rekey_bits * (last - first + 1.0) : 0.0;
    }
    case SecurityMode::Pqc:
        return 0.0;
    }
    return 0.0;
}

// --- Carbon ------------------------------------------------------------------

double CarbonRegion::ci_at(double t) const {
    if (ci_series.empty() || t < ci_series.front().first) {
        throw std::out_of_range("carbon region " + region_id + " has no intensity at t");
    }
    auto it = std::upper_bound(ci_series.begin(), ci_series.end(), t,
                               [](double v, const auto& p) { return v < p.first; });
    return std::prev(it)->second;
}

void CarbonTable::add(CarbonRegion r) {
    std::stable_sort(r.ci_series.begin(), r.ci_series.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [t, v] : r.ci_series) {
        if (v < 0.0) {
            throw std::invalid_argument("negative carbon intensity in region " + r.region_id);
        }
    }
    auto& slot = regions_[r.region_id];
    if (slot.region_id.empty()) {
        slot = std::move(r);
    } else {
        slot.ci_series.insert(slot.ci_series.end(), r.ci_series.begin(), r.ci_series.end());
        std::stable_sort(slot.ci_series.begin(), slot.ci_series.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
    }
}

const CarbonRegion& CarbonTable::region(const std::string& id) const {
    auto it = regions_.find(id);
    if (it == regions_.end()) {
        throw std::out_of_range("unknown carbon region: " + id);
    }
    return it->second;
}

std::vector<std::string> CarbonTable::ids() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : regions_) {
        out.push_back(k);
    }
    return out;
}

void CarbonTable::validate_coverage(double t0) const {
    for (const auto& [id, r] : regions_) {
        if (r.ci_series.empty() || r.ci_series.front().first > t0) {
            throw std::invalid_argument("carbon region " + id + " does not cover the horizon start");
        }
    }
}

CarbonTable load_ci_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw std::invalid_argument("carbon CSV is empty");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    if (line != "timestamp_s,region_id,gco2_per_kwh") {
        throw std::invalid_argument("carbon CSV header mismatch: " + line);
    }
    std::map<std::string, CarbonRegion> regions;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::stringstream ss(line);
        std::string ts;
        std::string region;
        std::string ci;
        if (!std::getline(ss, ts, ',') || !std::getline(ss, region, ',') ||
            !std::getline(ss, ci, ',')) {
            throw std::invalid_argument("carbon CSV line " + std::to_string(lineno) + " malformed");
        }
        auto& r = regions[region];
        r.region_id = region;
        try {
            r.ci_series.emplace_back(std::stod(ts), std::stod(ci));
        } catch (const std::exception&) {
            throw std::invalid_argument("carbon CSV line " + std::to_string(lineno) +
                                        " has a non-numeric field");
        }
    }
    CarbonTable table;
    for (auto& [id, r] : regions) {
        table.add(std::move(r));
    }
    return table;
}

CarbonTable load_ci_csv_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) {
        throw std::invalid_argument("cannot open carbon CSV: " + path);
    }
    return load_ci_csv(f);
}

double carbon_grams(double power_w, double ci_g_per_kwh, double dt_s) {
    return power_w * dt_s / 3.6e6 * ci_g_per_kwh;
}

double carbon_cost(const std::vector<std::string>& path, double t, double dt_s,
                   const std::function<double(const std::string&)>& power_of,
                   const std::function<std::string(const std::string&)>& region_of,
                   const CarbonTable& table) {
    double grams = 0.0;
    for (const auto& n : path) {
        grams += carbon_grams(power_of(n), table.ci(region_of(n), t), dt_s);
    }
    return grams;
}

// --- Resources ---------------------------------------------------------------

BatteryStep battery_step(const NodeState& node, double dt_s) {
    if (!(dt_s > 0.0)) {
        throw std::invalid_argument("battery_step: dt must be positive");
    }
    BatteryStep out{node, false};
    const double soc =
        node.battery_soc_wh + (node.solar_input_w - node.load_w) * dt_s / 3600.0;
    out.node.battery_soc_wh = std::clamp(soc, 0.0, node.battery_capacity_wh);
    out.reserve_violation = out.node.battery_soc_wh < node.battery_reserve_wh;
    return out;
}

KeyBufferStep key_buffer_step(double buffer_bits, double generated_bits, double consumed_bits,
                              double expired_bits, bool type_i) {
    if (buffer_bits < 0.0 || generated_bits < 0.0 || consumed_bits < 0.0 || expired_bits < 0.0) {
        throw std::invalid_argument("key_buffer_step: quantities must be non-negative");
    }
    KeyBufferStep out;
    const double available = std::max(0.0, buffer_bits + generated_bits - expired_bits);
    if (consumed_bits > available) {
        if (type_i) {
            out.key_outage = true;
            out.consumed_bits = 0.0;
        } else {
            out.consumed_bits = available;
        }
    } else {
        out.consumed_bits = consumed_bits;
    }
    out.buffer_bits = available - out.consumed_bits;
    return out;
}

// --- Weather -----------------------------------------------------------------

void WeatherTimeline::add(WeatherInterval iv) {
    if (!(iv.t1 > iv.t0)) {
        throw std::invalid_argument("weather interval for " + iv.site_id + " is empty");
    }
    intervals_.push_back(std::move(iv));
}

SiteWeather WeatherTimeline::baseline(const std::string& site_id) const {
    auto it = baseline_.find(site_id);
    return it == baseline_.end() ? SiteWeather{} : it->second;
}

SiteWeather WeatherTimeline::at(const std::string& site_id, double t) const {
    // Later intervals take precedence over earlier ones.
    for (auto it = intervals_.rbegin(); it != intervals_.rend(); ++it) {
        if (it->site_id == site_id && it->t0 <= t && t < it->t1) {
            return it->weather;
        }
    }
    return baseline(site_id);
}

std::vector<std::pair<double, double>> WeatherTimeline::cloud_intervals(const std::string& site_id,
                                                                        double t0,
                                                                        double t1) const {
    std::vector<std::pair<double, double>> out;
    for (const auto& iv : intervals_) {
        if (iv.site_id != site_id || !iv.weather.cloud) {
            continue;
        }
        const double lo = std::max(t0, iv.t0);
        const double hi = std::min(t1, iv.t1);
        if (hi > lo) {
            out.emplace_back(lo, hi);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

// --- Topology ----------------------------------------------------------------

const orbits::GroundSite* Topology::site(const std::string& id) const {
    for (const auto& s : sites) {
        if (s.site_id == id) {
            return &s;
        }
    }
    return nullptr;
}

std::string sat_name(int sat_id) { return "sat-" + std::to_string(sat_id); }

std::string edge_name(EdgeKind k, const std::string& a, const std::string& b) {
    return std::string(to_string(k)) + ":" + a + ":" + b;
}

const EdgeState* TimeVaryingGraph::edge(const std::string& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &edges[it->second];
}

const EdgeState* TimeVaryingGraph::edge_between(const std::string& a, const std::string& b) const {
    auto it = adj_.find(a);
    if (it == adj_.end()) {
        return nullptr;
    }
    for (size_t i : it->second) {
        if (edges[i].other(a) == b) {
            return &edges[i];
        }
    }
    return nullptr;
}

std::vector<const EdgeState*> TimeVaryingGraph::incident(const std::string& node) const {
    std::vector<const EdgeState*> out;
    auto it = adj_.find(node);
    if (it != adj_.end()) {
        for (size_t i : it->second) {
            out.push_back(&edges[i]);
        }
    }
    return out;
}

bool TimeVaryingGraph::has_node(const std::string& n) const {
    return std::find(nodes.begin(), nodes.end(), n) != nodes.end();
}

void TimeVaryingGraph::index() {
    by_id_.clear();
    adj_.clear();
    for (size_t i = 0; i < edges.size(); ++i) {
        by_id_[edges[i].edge_id] = i;
        adj_[edges[i].a].push_back(i);
        adj_[edges[i].b].push_back(i);
    }
}

double slant_rytov(double rytov_zenith, double elevation_deg) {
    const double el = std::max(elevation_deg, 5.0);
    const double sec_zenith = 1.0 / std::sin(deg2rad(el));
    return rytov_zenith * std::pow(sec_zenith, 11.0 / 6.0);
}

double slant_layer_km(double layer_km, double elevation_deg) {
    const double el = std::max(elevation_deg, 5.0);
    return layer_km / std::sin(deg2rad(el));
}

channel::LinkGeometry fso_geometry(const LinkPhysics& phys, const orbits::GroundSite& site,
                                   double range_km, double elevation_deg,
                                   const SiteWeather& weather) {
    channel::LinkGeometry g = phys.geometry;
    g.range_km = range_km;
    if (site.kind == orbits::SiteKind::Haps) {
        g.extinction_db_per_km = phys.haps_extinction_db_per_km;
        g.atm_path_km = 0.0;
    } else {
        g.extinction_db_per_km = weather.extinction_db_per_km;
        g.atm_path_km = slant_layer_km(phys.weather_layer_km, elevation_deg);
    }
    return g;
}

channel::GammaGammaParams fso_turbulence(const LinkPhysics& phys, const orbits::GroundSite& site,
                                         double range_km, double elevation_deg,
                                         const SiteWeather& weather) {
    const double rytov = site.kind == orbits::SiteKind::Haps
                             ? phys.haps_rytov
                             : slant_rytov(weather.rytov_zenith, elevation_deg);
    return channel::rytov_to_gg(rytov, phys.geometry.rx_aperture_m, range_km,
                                phys.geometry.wavelength_nm);
}

ChannelSample sample_fso(const LinkPhysics& phys, const orbits::GroundSite& site,
                         double range_km, double elevation_deg, const SiteWeather& weather,
                         channel::Rng& rng, double turbulence_irradiance) {
    const auto g = fso_geometry(phys, site, range_km, elevation_deg, weather);
    double irr = turbulence_irradiance;
    if (irr < 0.0) {
        irr = channel::sample_irradiance(
            fso_turbulence(phys, site, range_km, elevation_deg, weather), rng);
    }
    const double pe = channel::sample_pointing_error_urad(g.pointing_jitter_sigma_urad, rng);
    ChannelSample s;
    s.budget = channel::link_transmittance(g, irr, pe);
    s.qber = channel::qber(phys.qkd, s.budget.eta_total);
    s.skr_bps = channel::secret_key_rate(phys.qkd, s.budget.eta_total);
    s.snr_db = channel::snr_db(phys.qkd, s.budget.eta_total);
    return s;
}

TimeVaryingGraph snapshot(double t, const Topology& topo, const orbits::Constellation& c,
                          const std::vector<orbits::SatelliteState>& sats,
                          const WeatherLookup& weather, const LinkPhysics& phys,
                          channel::Rng* rng) {
    TimeVaryingGraph g;
    g.t = t;
    const double ea0 = c.spec().earth_angle0_deg;
    for (const auto& s : topo.sites) {
        g.nodes.push_back(s.site_id);
    }
    for (const auto& s : sats) {
        g.nodes.push_back(sat_name(s.sat_id));
    }

    for (const auto& se : topo.static_edges) {
        EdgeState e;
        e.kind = se.kind;
        e.a = se.a;
        e.b = se.b;
        e.edge_id = edge_name(se.kind, se.a, se.b);
        e.classical_capacity_bps = se.capacity_bps;
        e.length_km = se.length_km;
        const double n = se.kind == EdgeKind::Fiber ? phys.fiber_refractive_index : 1.0;
        e.latency_s = orbits::propagation_delay(se.length_km) * n;
        e.current_eta = 1.0;
        e.current_skr_bps = se.skr_bps;
        g.edges.push_back(std::move(e));
    }

    for (const auto& site : topo.sites) {
        const bool fso_capable =
            site.kind == orbits::SiteKind::Ogs || site.kind == orbits::SiteKind::Haps;
        const bool rf_capable = topo.rf_terminals.count(site.site_id) > 0;
        if (!fso_capable && !rf_capable) {
            continue;
        }
        const SiteWeather w = weather ? weather(site.site_id, t) : SiteWeather{};
        for (const auto& sat : sats) {
            const double el = orbits::elevation(site, sat, t, ea0);
            if (el < site.min_elevation_deg) {
                continue;
            }
            const double range = orbits::slant_range_km(site, sat, t, ea0);
            const std::string sn = sat_name(sat.sat_id);
            const bool immune = site.kind == orbits::SiteKind::Haps;
            if (fso_capable && (immune || !w.cloud)) {
                EdgeState e;
                e.kind = EdgeKind::FsoGroundSat;
                e.a = site.site_id;
                e.b = sn;
                e.edge_id = edge_name(e.kind, e.a, e.b);
                e.classical_capacity_bps = phys.fso_capacity_bps;
                e.length_km = range;
                e.latency_s = orbits::propagation_delay(range);
                if (rng != nullptr) {
                    ChannelSample cs = sample_fso(phys, site, range, el, w, *rng);
                    e.current_eta = cs.budget.eta_total;
                    e.current_skr_bps = cs.skr_bps;
                    e.status = cs.skr_bps > 0.0 ? EdgeStatus::Up : EdgeStatus::Degraded;
                    e.sample = cs;
                }
                g.edges.push_back(std::move(e));
            }
            if (rf_capable) {
                EdgeState e;
                e.kind = EdgeKind::Rf;
                e.a = site.site_id;
                e.b = sn;
                e.edge_id = edge_name(e.kind, e.a, e.b);
                e.classical_capacity_bps =
                    channel::rf_fallback_capacity(phys.rf, range, {w.heavy_rain});
                e.length_km = range;
                e.latency_s = orbits::propagation_delay(range);
                e.current_skr_bps = channel::rf_secret_key_rate();
                e.status = w.heavy_rain ? EdgeStatus::Degraded : EdgeStatus::Up;
                if (e.classical_capacity_bps > 0.0) {
                    g.edges.push_back(std::move(e));
                }
            }
        }
    }

    const auto& spec = c.spec();
    if (topo.intra_plane_isl && spec.sats_per_plane > 1) {
        for (int p = 0; p < spec.planes; ++p) {
            const int pairs = spec.sats_per_plane == 2 ? 1 : spec.sats_per_plane;
            for (int s = 0; s < pairs; ++s) {
                const int i = p * spec.sats_per_plane + s;
                const int j = p * spec.sats_per_plane + (s + 1) % spec.sats_per_plane;
                const double range = (sats[static_cast<size_t>(i)].position -
                                      sats[static_cast<size_t>(j)].position)
                                         .norm();
                EdgeState e;
                e.kind = EdgeKind::Oisl;
                e.a = sat_name(i);
                e.b = sat_name(j);
                e.edge_id = edge_name(e.kind, e.a, e.b);
                e.classical_capacity_bps = phys.oisl_capacity_bps;
                e.length_km = range;
                e.latency_s = orbits::propagation_delay(range);
                g.edges.push_back(std::move(e));
            }
        }
    }
    g.index();
    return g;
}

// --- Demand ------------------------------------------------------------------

std::vector<FlowDemand> demand_generator(const TrafficSpec& spec, channel::Rng& rng) {
    std::vector<FlowDemand> flows;
    for (const auto& ev : spec.persistent) {
        FlowDemand f;
        f.src = ev.src;
        f.dst = ev.dst;
        f.cls = ev.cls;
        f.start_s = ev.start_s;
        f.duration_s = ev.duration_s;
        f.data_rate_bps = ev.data_rate_bps;
        f.deadline_s = ev.deadline_s > 0.0 ? ev.deadline_s : ev.start_s + ev.duration_s;
        f.forbidden_regions = ev.forbidden_regions;
        flows.push_back(std::move(f));
    }
    for (const auto& ps : spec.poisson) {
        if (ps.arrivals_per_hour <= 0.0 || ps.endpoints.empty()) {
            continue;
        }
        std::exponential_distribution<double> gap(ps.arrivals_per_hour / 3600.0);
        std::exponential_distribution<double> dur(1.0 / ps.mean_duration_s);
        std::uniform_int_distribution<size_t> pick(0, ps.endpoints.size() - 1);
        double t = gap(rng);
        while (t < spec.horizon_s) {
            FlowDemand f;
            const auto& ep = ps.endpoints[pick(rng)];
            f.src = ep.first;
            f.dst = ep.second;
            f.cls = ps.cls;
            f.start_s = t;
            f.duration_s = std::max(1.0, dur(rng));
            f.data_rate_bps = ps.data_rate_bps;
            f.deadline_s = f.end_s() + ps.deadline_slack_s;
            flows.push_back(std::move(f));
            t += gap(rng);
        }
    }
    std::stable_sort(flows.begin(), flows.end(),
                     [](const FlowDemand& a, const FlowDemand& b) { return a.start_s < b.start_s; });
    for (size_t i = 0; i < flows.size(); ++i) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "flow-%04zu", i);
        flows[i].flow_id = buf;
    }
    return flows;
}

} // namespace qntn::net
