#pragma once

// Walker-Delta constellation on circular Keplerian orbits over a spherical,
// rotating Earth. Positions are Earth-centred inertial (ECI), km.
//
// Frame conventions:
// - ECI z axis is the Earth spin axis; the Greenwich meridian lies at
//   earth_angle0_deg from ECI x at t = 0 and rotates at the sidereal rate.
// - The Sun moves on a circular ecliptic (obliquity 23.44 deg, 1 year period)
//   starting at ecliptic longitude sun_longitude0_deg at t = 0.
// - Eclipse is the cylindrical umbra behind the Earth (no penumbra).

#include "qntn/geometry.hpp"

#include <string>
#include <vector>

namespace qntn::orbits {

struct ConstellationSpec {
    int planes = 2;
    int sats_per_plane = 4;
    double altitude_km = 550.0;
    double inclination_deg = 53.0;
    int phasing_factor = 1;
    double epoch_s = 0.0;
    double raan0_deg = 0.0;
    double anomaly0_deg = 0.0;
    double earth_angle0_deg = 0.0;
    double sun_longitude0_deg = 0.0;

    int total() const { return planes * sats_per_plane; }
    // Throws std::invalid_argument on any violated invariant.
    void validate() const;
};

struct SatelliteState {
    int sat_id = 0;
    Vec3 position;  // km, ECI
    Vec3 velocity;  // km/s, ECI
    bool in_eclipse = false;
};

enum class SiteKind { Industrial, Ogs, HapsAnchor, Haps };

struct GroundSite {
    std::string site_id;
    double latitude_deg = 0.0;
    double longitude_deg = 0.0;
    double altitude_km = 0.0;
    double min_elevation_deg = 20.0;
    SiteKind kind = SiteKind::Ogs;

    void validate() const;
};

struct ContactWindow {
    int sat_id = 0;
    std::string site_id;
    double t_rise = 0.0;
    double t_set = 0.0;
    double t_max_elev = 0.0;
    double max_elevation_deg = 0.0;

    double duration() const { return t_set - t_rise; }
    bool covers(double t0, double t1) const { return t_rise <= t0 && t1 <= t_set; }
};

// Validated constellation with per-satellite orbital elements precomputed.
class Constellation {
public:
    explicit Constellation(ConstellationSpec spec);

    const ConstellationSpec& spec() const { return spec_; }
    int size() const { return static_cast<int>(raan_.size()); }
    double semi_major_axis_km() const { return a_; }
    double mean_motion_rad_s() const { return n_; }
    double period_s() const;

    // Initial argument of latitude of a satellite (radians).
    double initial_anomaly(int sat_id) const { return u0_[static_cast<size_t>(sat_id)]; }
    double raan(int sat_id) const { return raan_[static_cast<size_t>(sat_id)]; }

    SatelliteState state(int sat_id, double t) const;

private:
    ConstellationSpec spec_;
    double a_ = 0.0;
    double n_ = 0.0;
    double cos_i_ = 1.0;
    double sin_i_ = 0.0;
    std::vector<double> raan_;
    std::vector<double> u0_;
};

// All satellite states at time t (t >= epoch).
std::vector<SatelliteState> propagate(const Constellation& c, double t);

double orbital_period_s(double altitude_km);

// Sun unit vector in ECI.
Vec3 sun_direction(double t, double sun_longitude0_deg = 0.0);

// ECI position of a ground site (or HAPS) at time t.
Vec3 site_position(const GroundSite& site, double t, double earth_angle0_deg = 0.0);

// Geometric elevation of the satellite above the site's local horizon, degrees.
double elevation(const GroundSite& site, const SatelliteState& sat, double t,
                 double earth_angle0_deg = 0.0);

double slant_range_km(const GroundSite& site, const SatelliteState& sat, double t,
                      double earth_angle0_deg = 0.0);

// Contact windows above the site's mask in [t0, t1], sorted by rise time.
// Boundaries come from a 10 s scan refined by bisection.
std::vector<ContactWindow> contact_windows(const Constellation& c, const GroundSite& site,
                                           double t0, double t1);

bool in_eclipse(const SatelliteState& sat, double t, double sun_longitude0_deg = 0.0);

// One-way free-space delay for a distance in km, seconds.
double propagation_delay(double distance_km);

// Great-circle ground distance between two sites, km.
double ground_distance_km(const GroundSite& a, const GroundSite& b);

} // namespace qntn::orbits
