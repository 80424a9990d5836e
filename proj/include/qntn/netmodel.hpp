#pragma once

// Network model: time-varying graph over ground sites, HAPS and satellites,
// node energy/key resources, industrial traffic classes and carbon
// accounting.

#include "qntn/channel.hpp"
#include "qntn/orbits.hpp"

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace qntn::net {

enum class NodeKind { Industrial, Ogs, Satellite, Haps };
enum class EdgeKind { Fiber, FsoGroundSat, Oisl, Rf, QuantumCoexist };
enum class EdgeStatus { Up, Degraded, Down };

const char* to_string(NodeKind k);
const char* to_string(EdgeKind k);
const char* to_string(EdgeStatus s);

struct NodeState {
    std::string node_id;
    NodeKind kind = NodeKind::Industrial;
    double battery_soc_wh = 0.0;
    double battery_capacity_wh = 0.0;
    double battery_reserve_wh = 0.0;
    double solar_input_w = 0.0;
    double load_w = 0.0;
    int memory_slots_used = 0;
    int memory_capacity = 0;
    std::string carbon_region;
    std::map<std::string, double> key_buffers; // peer id -> bits
};

struct ChannelSample {
    channel::LinkBudget budget;
    double qber = 0.5;
    double skr_bps = 0.0;
    double snr_db = 0.0;
};

struct EdgeState {
    std::string edge_id;
    EdgeKind kind = EdgeKind::Fiber;
    std::string a;
    std::string b;
    double classical_capacity_bps = 0.0;
    double length_km = 0.0;
    double latency_s = 0.0;
    double current_eta = 0.0;
    double current_skr_bps = 0.0;
    EdgeStatus status = EdgeStatus::Up;
    std::optional<ChannelSample> sample;

    bool carries_quantum() const {
        return kind == EdgeKind::FsoGroundSat || kind == EdgeKind::QuantumCoexist ||
               kind == EdgeKind::Fiber;
    }
    const std::string& other(const std::string& n) const { return n == a ? b : a; }
};

// --- Traffic -----------------------------------------------------------------

enum class TrafficClass { TypeI, TypeII, TypeIII, TypeIV };
enum class SecurityMode { Otp, Aes256Rekey, Aes128Batch, Pqc };

const char* to_string(TrafficClass c);
const char* to_string(SecurityMode m);
TrafficClass traffic_class_from_string(const std::string& s);

struct TrafficClassSpec {
    TrafficClass cls = TrafficClass::TypeI;
    double latency_target_s = 1e-3;
    double reliability_target = 0.99999;
    SecurityMode security = SecurityMode::Otp;
    // Key consumption: OTP consumes bits at the data rate; rekeyed modes
    // consume rekey_bits once per rekey_period_s; PQC consumes nothing.
    double rekey_bits = 0.0;
    double rekey_period_s = 0.0;
};

// Table-1 defaults for each class.
TrafficClassSpec class_spec(TrafficClass c);

struct FlowDemand {
    std::string flow_id;
    std::string src;
    std::string dst;
    TrafficClass cls = TrafficClass::TypeI;
    double data_rate_bps = 0.0;
    double start_s = 0.0;
    double duration_s = 0.0;
    double deadline_s = 0.0; // latest completion time, bulk flows
    std::set<std::string> forbidden_regions;

    double end_s() const { return start_s + duration_s; }
};

// Key bits a flow consumes in [t0, t1).
double key_demand_bits(const TrafficClassSpec& spec, const FlowDemand& flow, double t0, double t1);

// --- Carbon ------------------------------------------------------------------

struct CarbonRegion {
    std::string region_id;
    std::vector<std::pair<double, double>> ci_series; // (t_s, gCO2/kWh), sorted

    // Piecewise-constant lookup; throws if t precedes the first sample.
    double ci_at(double t) const;
};

class CarbonTable {
public:
    void add(CarbonRegion r);
    bool has(const std::string& region) const { return regions_.count(region) > 0; }
    const CarbonRegion& region(const std::string& id) const;
    double ci(const std::string& region_id, double t) const { return region(region_id).ci_at(t); }
    std::vector<std::string> ids() const;
    // Checks that every region has coverage starting at or before t0.
    void validate_coverage(double t0) const;

private:
    std::map<std::string, CarbonRegion> regions_;
};

// Parses `timestamp_s,region_id,gco2_per_kwh` rows (header required).
CarbonTable load_ci_csv(std::istream& in);
CarbonTable load_ci_csv_file(const std::string& path);

// Energy in W*s converted to kWh times intensity.
double carbon_grams(double power_w, double ci_g_per_kwh, double dt_s);

// Sum over path nodes of P_load * CI * dt. power_of maps node id to watts,
// region_of maps node id to its carbon region.
double carbon_cost(const std::vector<std::string>& path, double t, double dt_s,
                   const std::function<double(const std::string&)>& power_of,
                   const std::function<std::string(const std::string&)>& region_of,
                   const CarbonTable& table);

// --- Resources ---------------------------------------------------------------

struct BatteryStep {
    NodeState node;
    bool reserve_violation = false;
};

BatteryStep battery_step(const NodeState& node, double dt_s);

struct KeyBufferStep {
    double buffer_bits = 0.0;
    double consumed_bits = 0.0;
    bool key_outage = false;
};

// buffer' = buffer + generated - consumed - expired. A Type-I request larger
// than the available bits is refused whole and flagged as an outage.
KeyBufferStep key_buffer_step(double buffer_bits, double generated_bits, double consumed_bits,
                              double expired_bits, bool type_i);

// --- Topology and snapshots --------------------------------------------------

struct SiteWeather {
    bool cloud = false;
    bool heavy_rain = false;
    double extinction_db_per_km = 0.2;
    double rytov_zenith = 0.15;
};

// Ground-truth weather: a per-site baseline overridden by intervals.
struct WeatherInterval {
    std::string site_id;
    double t0 = 0.0;
    double t1 = 0.0;
    SiteWeather weather;
};

class WeatherTimeline {
public:
    void set_baseline(const std::string& site_id, SiteWeather w) { baseline_[site_id] = w; }
    void add(WeatherInterval iv);
    SiteWeather at(const std::string& site_id, double t) const;
    // Cloud intervals for a site clipped to [t0, t1], sorted.
    std::vector<std::pair<double, double>> cloud_intervals(const std::string& site_id, double t0,
                                                           double t1) const;
    const std::vector<WeatherInterval>& intervals() const { return intervals_; }
    SiteWeather baseline(const std::string& site_id) const;

private:
    std::map<std::string, SiteWeather> baseline_;
    std::vector<WeatherInterval> intervals_;
};

struct StaticEdge {
    std::string a;
    std::string b;
    EdgeKind kind = EdgeKind::Fiber;
    double capacity_bps = 10e9;
    double length_km = 0.0;
    double skr_bps = 0.0; // quantum-capable static links
};

struct LinkPhysics {
    channel::LinkGeometry geometry;  // range/extinction filled per edge
    channel::QkdLinkModel qkd;
    channel::RfLinkModel rf;
    double weather_layer_km = 1.0;   // thickness of the lossy layer
    double haps_rytov = 0.01;        // stratospheric path, weak turbulence
    double haps_extinction_db_per_km = 0.0;
    double fso_capacity_bps = 1e9;
    double oisl_capacity_bps = 1e9;
    double fiber_refractive_index = 1.468;
};

struct Topology {
    std::vector<orbits::GroundSite> sites;   // industrial, OGS, HAPS
    std::set<std::string> rf_terminals;      // sites with Ka-band RF
    std::vector<StaticEdge> static_edges;
    bool intra_plane_isl = true;

    const orbits::GroundSite* site(const std::string& id) const;
};

std::string sat_name(int sat_id);
std::string edge_name(EdgeKind k, const std::string& a, const std::string& b);

class TimeVaryingGraph {
public:
    double t = 0.0;
    std::vector<std::string> nodes;
    std::vector<EdgeState> edges;

    const EdgeState* edge(const std::string& id) const;
    const EdgeState* edge_between(const std::string& a, const std::string& b) const;
    std::vector<const EdgeState*> incident(const std::string& node) const;
    bool has_node(const std::string& n) const;
    void index();

private:
    std::map<std::string, size_t> by_id_;
    std::map<std::string, std::vector<size_t>> adj_;
};

using WeatherLookup = std::function<SiteWeather(const std::string& site_id, double t)>;

// Elevation-dependent Rytov variance and lossy path length for a
// ground-satellite link.
double slant_rytov(double rytov_zenith, double elevation_deg);
double slant_layer_km(double layer_km, double elevation_deg);

// Link geometry for a ground/HAPS to satellite FSO hop.
channel::LinkGeometry fso_geometry(const LinkPhysics& phys, const orbits::GroundSite& site,
                                   double range_km, double elevation_deg,
                                   const SiteWeather& weather);
channel::GammaGammaParams fso_turbulence(const LinkPhysics& phys, const orbits::GroundSite& site,
                                         double range_km, double elevation_deg,
                                         const SiteWeather& weather);

// Draws one channel sample for an FSO hop.
ChannelSample sample_fso(const LinkPhysics& phys, const orbits::GroundSite& site,
                         double range_km, double elevation_deg, const SiteWeather& weather,
                         channel::Rng& rng, double turbulence_irradiance = -1.0);

// G(t): FSO ground-satellite edges iff elevation >= mask and the site is
// cloud-free (HAPS are above the cloud layer); RF edges iff elevation >=
// mask at an RF terminal; static edges always. When rng is non-null every
// FSO edge carries a fresh channel sample.
TimeVaryingGraph snapshot(double t, const Topology& topo, const orbits::Constellation& c,
                          const std::vector<orbits::SatelliteState>& sats,
                          const WeatherLookup& weather, const LinkPhysics& phys,
                          channel::Rng* rng);

// --- Demand ------------------------------------------------------------------

struct PoissonStream {
    TrafficClass cls = TrafficClass::TypeIII;
    double arrivals_per_hour = 0.0;
    double mean_duration_s = 60.0;
    double data_rate_bps = 1e3;
    std::vector<std::pair<std::string, std::string>> endpoints;
    double deadline_slack_s = 0.0;
};

struct ScheduledEvent {
    std::string src;
    std::string dst;
    TrafficClass cls = TrafficClass::TypeIV;
    double start_s = 0.0;
    double duration_s = 0.0;
    double data_rate_bps = 0.0;
    double deadline_s = 0.0;
    std::set<std::string> forbidden_regions;
};

struct TrafficSpec {
    std::vector<ScheduledEvent> persistent; // explicit flows and bulk events
    std::vector<PoissonStream> poisson;
    double horizon_s = 0.0;
};

// Deterministic per seed; flows sorted by start time then id.
std::vector<FlowDemand> demand_generator(const TrafficSpec& spec, channel::Rng& rng);

} // namespace qntn::net
