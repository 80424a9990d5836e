#include "qntn/orbits.hpp"

#include <algorithm>
#include <stdexcept>

namespace qntn::orbits {

namespace {

constexpr double kScanStepS = 10.0;
constexpr double kBisectTolS = 1e-3;

Vec3 site_ecef(const GroundSite& site) {
    const double lat = deg2rad(site.latitude_deg);
    const double lon = deg2rad(site.longitude_deg);
    const double r = kEarthRadiusKm + site.altitude_km;
    return {r * std::cos(lat) * std::cos(lon), r * std::cos(lat) * std::sin(lon),
            r * std::sin(lat)};
}

} // namespace

void ConstellationSpec::validate() const {
    if (planes < 1 || sats_per_plane < 1) {
        throw std::invalid_argument("constellation needs at least one plane and one satellite");
    }
    if (altitude_km < 300.0 || altitude_km > 2000.0) {
        throw std::invalid_argument("altitude outside LEO regime [300, 2000] km");
    }
    if (inclination_deg < 0.0 || inclination_deg > 180.0) {
        throw std::invalid_argument("inclination outside [0, 180] deg");
    }
}

void GroundSite::validate() const {
    if (latitude_deg < -90.0 || latitude_deg > 90.0) {
        throw std::invalid_argument("site " + site_id + ": latitude outside [-90, 90]");
    }
    if (min_elevation_deg < 0.0 || min_elevation_deg > 90.0) {
        throw std::invalid_argument("site " + site_id + ": elevation mask outside [0, 90]");
    }
}

Constellation::Constellation(ConstellationSpec spec) : spec_(spec) {
    spec_.validate();
    a_ = kEarthRadiusKm + spec_.altitude_km;
    n_ = std::sqrt(kMuEarth / (a_ * a_ * a_));
    cos_i_ = std::cos(deg2rad(spec_.inclination_deg));
    sin_i_ = std::sin(deg2rad(spec_.inclination_deg));
    const int total = spec_.total();
    raan_.reserve(static_cast<size_t>(total));
    u0_.reserve(static_cast<size_t>(total));
    for (int p = 0; p < spec_.planes; ++p) {
        for (int s = 0; s < spec_.sats_per_plane; ++s) {
            raan_.push_back(deg2rad(spec_.raan0_deg + 360.0 * p / spec_.planes));
            u0_.push_back(deg2rad(spec_.anomaly0_deg + 360.0 * s / spec_.sats_per_plane +
                                  360.0 * spec_.phasing_factor * p / total));
        }
    }
}

double Constellation::period_s() const { return 2.0 * kPi / n_; }

SatelliteState Constellation::state(int sat_id, double t) const {
    const auto idx = static_cast<size_t>(sat_id);
    const double u = u0_[idx] + n_ * (t - spec_.epoch_s);
    const double cu = std::cos(u);
    const double su = std::sin(u);
    const double co = std::cos(raan_[idx]);
    const double so = std::sin(raan_[idx]);
    const double v = std::sqrt(kMuEarth / a_);

    SatelliteState st;
    st.sat_id = sat_id;
    st.position = {a_ * (co * cu - so * su * cos_i_), a_ * (so * cu + co * su * cos_i_),
                   a_ * su * sin_i_};
    st.velocity = {v * (-co * su - so * cu * cos_i_), v * (-so * su + co * cu * cos_i_),
                   v * cu * sin_i_};
    st.in_eclipse = in_eclipse(st, t, spec_.sun_longitude0_deg);
    return st;
}

std::vector<SatelliteState> propagate(const Constellation& c, double t) {
    if (t < c.spec().epoch_s) {
        throw std::invalid_argument("propagate: t precedes constellation epoch");
    }
    std::vector<SatelliteState> out;
    out.reserve(static_cast<size_t>(c.size()));
    for (int i = 0; i < c.size(); ++i) {
        out.push_back(c.state(i, t));
    }
    return out;
}

double orbital_period_s(double altitude_km) {
    const double a = kEarthRadiusKm + altitude_km;
    return 2.0 * kPi * std::sqrt(a * a * a / kMuEarth);
}

Vec3 sun_direction(double t, double sun_longitude0_deg) {
    const double lambda = deg2rad(sun_longitude0_deg) + 2.0 * kPi * t / kSecondsPerYear;
    const double eps = deg2rad(kObliquityDeg);
    return {std::cos(lambda), std::sin(lambda) * std::cos(eps), std::sin(lambda) * std::sin(eps)};
}

Vec3 site_position(const GroundSite& site, double t, double earth_angle0_deg) {
    return rotate_z(site_ecef(site), deg2rad(earth_angle0_deg) + kEarthRotationRadS * t);
}

double elevation(const GroundSite& site, const SatelliteState& sat, double t,
                 double earth_angle0_deg) {
    const Vec3 p = site_position(site, t, earth_angle0_deg);
    const Vec3 d = sat.position - p;
    const double range = d.norm();
    if (range == 0.0) {
        return 90.0;
    }
    // atan2 keeps full precision near the zenith, where asin does not.
    const Vec3 up = p.unit();
    const double v = d.dot(up);
    const double h = (d - up * v).norm();
    return rad2deg(std::atan2(v, h));
}

double slant_range_km(const GroundSite& site, const SatelliteState& sat, double t,
                      double earth_angle0_deg) {
    return (sat.position - site_position(site, t, earth_angle0_deg)).norm();
}

std::vector<ContactWindow> contact_windows(const Constellation& c, const GroundSite& site,
                                           double t0, double t1) {
    if (!(t0 < t1)) {
        throw std::invalid_argument("contact_windows: t0 must precede t1");
    }
    const double mask = site.min_elevation_deg;
    const double ea0 = c.spec().earth_angle0_deg;
    std::vector<ContactWindow> out;

    for (int sat = 0; sat < c.size(); ++sat) {
        auto margin = [&](double t) { return elevation(site, c.state(sat, t), t, ea0) - mask; };
        auto bisect = [&](double lo, double hi) {
            // margin(lo) and margin(hi) differ in sign; returns the crossing.
            const bool lo_up = margin(lo) >= 0.0;
            while (hi - lo > kBisectTolS) {
                const double mid = 0.5 * (lo + hi);
                if ((margin(mid) >= 0.0) == lo_up) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return 0.5 * (lo + hi);
        };
        auto peak = [&](double lo, double hi) {
            // Golden-section search for the elevation maximum.
            const double g = 0.5 * (std::sqrt(5.0) - 1.0);
            double x1 = hi - g * (hi - lo);
            double x2 = lo + g * (hi - lo);
            double f1 = margin(x1);
            double f2 = margin(x2);
            while (hi - lo > kBisectTolS) {
                if (f1 < f2) {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + g * (hi - lo);
                    f2 = margin(x2);
                } else {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - g * (hi - lo);
                    f1 = margin(x1);
                }
            }
            return 0.5 * (lo + hi);
        };

        double prev_t = t0;
        double prev_m = margin(t0);
        bool open = prev_m >= 0.0;
        double rise = t0;
        double best_t = t0;
        double best_m = prev_m;

        auto close = [&](double set) {
            const double lo = std::max(rise, best_t - kScanStepS);
            const double hi = std::min(set, best_t + kScanStepS);
            const double tm = hi > lo ? peak(lo, hi) : best_t;
            ContactWindow w;
            w.sat_id = sat;
            w.site_id = site.site_id;
            w.t_rise = rise;
            w.t_set = set;
            w.t_max_elev = std::clamp(tm, rise, set);
            w.max_elevation_deg = margin(w.t_max_elev) + mask;
            if (w.t_set > w.t_rise && w.max_elevation_deg >= mask) {
                out.push_back(w);
            }
        };

        for (double t = t0 + kScanStepS;; t += kScanStepS) {
            const double tt = std::min(t, t1);
            const double m = margin(tt);
            if (!open && m >= 0.0) {
                rise = bisect(prev_t, tt);
                open = true;
                best_t = tt;
                best_m = m;
            } else if (open && m < 0.0) {
                close(bisect(prev_t, tt));
                open = false;
            } else if (open && m > best_m) {
                best_t = tt;
                best_m = m;
            }
            prev_t = tt;
            prev_m = m;
            if (tt >= t1) {
                break;
            }
        }
        if (open) {
            close(t1);
        }
    }
    std::sort(out.begin(), out.end(), [](const ContactWindow& a, const ContactWindow& b) {
        if (a.t_rise != b.t_rise) {
            return a.t_rise < b.t_rise;
        }
        return a.sat_id < b.sat_id;
    });
    return out;
}

bool in_eclipse(const SatelliteState& sat, double t, double sun_longitude0_deg) {
    const Vec3 s = sun_direction(t, sun_longitude0_deg);
    const double along = sat.position.dot(s);
    if (along >= 0.0) {
        return false;
    }
    const Vec3 perp = sat.position - s * along;
    return perp.norm() < kEarthRadiusKm;
}

double propagation_delay(double distance_km) {
    if (distance_km < 0.0) {
        throw std::invalid_argument("propagation_delay: negative distance");
    }
    return distance_km / kSpeedOfLightKmS;
}

double ground_distance_km(const GroundSite& a, const GroundSite& b) {
    const Vec3 pa = site_ecef(a).unit();
    const Vec3 pb = site_ecef(b).unit();
    return kEarthRadiusKm * std::acos(std::clamp(pa.dot(pb), -1.0, 1.0));
}

} // namespace qntn::orbits
