#pragma once

// Scenario configuration: one JSON document with a format_version field.
// Relative file paths inside it resolve against the config's directory.

#include "qntn/channel.hpp"
#include "qntn/control_mpc.hpp"
#include "qntn/control_rl.hpp"
#include "qntn/netmodel.hpp"
#include "qntn/observability.hpp"
#include "qntn/orbits.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace qntn::sim {

inline constexpr int kConfigFormatVersion = 1;

enum class ControllerKind { Ai, BaselineShortestPath, CarbonBlindAi };
const char* to_string(ControllerKind c);
ControllerKind controller_from_string(const std::string& s);

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SiteConfig {
    orbits::GroundSite site;
    std::string region;             // carbon region; empty for solar nodes
    int terminals = 0;              // optical ground terminals
    bool rf = false;
    double idle_power_w = 0.0;
    double terminal_power_w = 0.0;  // per active optical terminal
    double energy_per_bit_j = 0.0;  // forwarding energy
};

// A weather front moving east across the sites: turbulence first, then cloud.
struct FrontConfig {
    bool enabled = false;
    double start_s = 0.0;
    double start_jitter_s = 0.0;    // per-seed uniform offset
    double speed_kmh = 60.0;
    double origin_lon_deg = 0.0;
    double turbulence_s = 600.0;
    double cloud_s = 900.0;
    double rytov_zenith = 1.0;
    double extinction_db_per_km = 3.0;
    std::vector<std::string> sites; // empty: every OGS
};

struct WeatherConfig {
    net::SiteWeather baseline;
    std::map<std::string, net::SiteWeather> site_baseline;
    std::vector<net::WeatherInterval> intervals;
    FrontConfig front;
};

struct ObjectiveWeights {
    double w1 = 1.0;   // secure rate ratio
    double w2 = 1.0;   // latency, per second
    double w3 = 1e-3;  // carbon, per gram
    double w4 = 1.0;   // Type-I availability
    double gamma = 0.99;
};

struct RlConfig {
    int episodes = 300;
    double learning_rate = 0.5;
    bool greedy = true;
    std::optional<rl::Policy> weights;   // skips training when present
};

struct ControlConfig {
    double critical_threshold_factor = 2.0;   // x per-tick Type-I demand
    double handover_lead_s = 30.0;
    double switch_buffer_s = 1.0;
    double serialization_delay_s = 1e-4;
    double switch_guard_s = 2.0;              // latest switch before outgoing set
    double carbon_weight = 1.0;               // key bits per gram in contact choice
    int mpc_horizon = 30;
    double soc_target_frac = 0.8;
    double key_target_s = 600.0;              // MPC key-buffer target, seconds of demand
    double turbo_window_s = 1.0;
    double turbo_margin = 1.2;
    double fallback_hysteresis_db = 3.0;
    double fallback_dwell_s = 1.0;
    double key_shelf_life_s = 7200.0;
    double initial_key_bits = 0.0;            // stock in every OGS key store at t = 0
    double acquisition_s = 1.0;               // incoming-terminal pointing time
    double seeing_noise_frac = 0.05;
    bool shield = true;
    RlConfig rl;
    obs::ForecastConfig forecast;
};

struct SimConfig {
    int format_version = kConfigFormatVersion;
    std::string name;
    std::string base_dir;
    double duration_s = 7200.0;
    double tier1_tick_s = 60.0;
    double tier2_tick_s = 0.01;
    double geometry_step_s = 1.0;
    ControllerKind controller = ControllerKind::Ai;
    std::vector<uint64_t> seeds{1};

    orbits::ConstellationSpec constellation;
    std::vector<SiteConfig> sites;
    std::vector<net::StaticEdge> static_edges;
    bool intra_plane_isl = false;
    std::string ci_csv;                        // resolved path
    net::CarbonTable carbon;
    WeatherConfig weather;
    net::TrafficSpec traffic;
    net::LinkPhysics physics;
    double scintillation_rho = 0.9;            // lag-one correlation of Tier-2 irradiance
    channel::QuantumMemorySpec memory;
    mpc::EnergyModel energy;
    ObjectiveWeights objective;
    rl::RewardWeights reward;
    ControlConfig control;

    // Checks every invariant and that referenced files exist.
    void validate() const;
    const SiteConfig* site(const std::string& id) const;
    net::Topology topology() const;
};

SimConfig config_from_json(const nlohmann::json& j, const std::string& base_dir);
SimConfig load_config(const std::string& path);

rl::Policy policy_from_json(const nlohmann::json& j);
nlohmann::json policy_to_json(const rl::Policy& p);

} // namespace qntn::sim
