#include <doctest.h>

#include "qntn/orbits.hpp"

#include <algorithm>
#include <cmath>

using namespace qntn;
using namespace qntn::orbits;

namespace {

ConstellationSpec single_equatorial() {
    ConstellationSpec s;
    s.planes = 1;
    s.sats_per_plane = 1;
    s.inclination_deg = 0.0;
    return s;
}

ConstellationSpec desk_shell() {
    ConstellationSpec s;
    s.planes = 4;
    s.sats_per_plane = 2;
    s.phasing_factor = 3;
    s.raan0_deg = 70.0;
    s.anomaly0_deg = 10.0;
    return s;
}

GroundSite site_at(double lat, double lon, double mask = 20.0) {
    GroundSite g;
    g.site_id = "site";
    g.latitude_deg = lat;
    g.longitude_deg = lon;
    g.min_elevation_deg = mask;
    return g;
}

// Slant range from elevation on a spherical Earth, by the law of cosines.
double slant_range_oracle(double elevation_deg, double altitude_km) {
    const double r = kEarthRadiusKm;
    const double a = r + altitude_km;
    const double e = elevation_deg * M_PI / 180.0;
    return std::sqrt(a * a - std::pow(r * std::cos(e), 2)) - r * std::sin(e);
}

} // namespace

TEST_CASE("orbital period follows Kepler's third law") {
    const double a = 6371.0 + 550.0;
    const double oracle = 2.0 * M_PI * std::sqrt(a * a * a / 398600.4418);
    CHECK(orbital_period_s(550.0) == doctest::Approx(oracle).epsilon(1e-12));
    Constellation c(desk_shell());
    CHECK(c.period_s() == doctest::Approx(oracle).epsilon(1e-12));
    // About 95.5 minutes for a 550 km shell over a 6371 km sphere.
    CHECK(oracle / 60.0 == doctest::Approx(95.7).epsilon(3e-3));
}

TEST_CASE("circular orbits keep radius and speed") {
    Constellation c(desk_shell());
    const double a = kEarthRadiusKm + 550.0;
    const double v = std::sqrt(kMuEarth / a);
    for (double t : {0.0, 17.3, 1000.0, 5000.5, 86400.0}) {
        for (const auto& s : propagate(c, t)) {
            CHECK(std::abs(s.position.norm() - a) < 1e-6);
            CHECK(std::abs(s.velocity.norm() - v) < 1e-6);
        }
    }
}

TEST_CASE("positions repeat after one period in the inertial frame") {
    Constellation c(desk_shell());
    const double T = c.period_s();
    for (double t : {0.0, 123.0, 4000.0}) {
        const auto a = propagate(c, t);
        const auto b = propagate(c, t + T);
        for (size_t i = 0; i < a.size(); ++i) {
            CHECK((a[i].position - b[i].position).norm() < 1e-6);
        }
    }
}

TEST_CASE("epoch places each satellite at its Walker slot") {
    Constellation c(desk_shell());
    REQUIRE(c.size() == 8);
    for (int i = 0; i < c.size(); ++i) {
        const int plane = i / 2;
        const int slot = i % 2;
        const double raan = deg2rad(70.0) + 2.0 * M_PI * plane / 4.0;
        const double u = deg2rad(10.0) + 2.0 * M_PI * slot / 2.0 + 2.0 * M_PI * 3.0 * plane / 8.0;
        CHECK(std::remainder(c.raan(i) - raan, 2.0 * M_PI) == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(std::remainder(c.initial_anomaly(i) - u, 2.0 * M_PI) ==
              doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("zenith, antipode and zenith slant range") {
    Constellation c(single_equatorial());
    const auto sat = c.state(0, 0.0);
    CHECK(elevation(site_at(0.0, 0.0), sat, 0.0) == doctest::Approx(90.0).epsilon(1e-12));
    CHECK(slant_range_km(site_at(0.0, 0.0), sat, 0.0) == doctest::Approx(550.0).epsilon(1e-9));
    CHECK(elevation(site_at(0.0, 180.0), sat, 0.0) < 0.0);
}

TEST_CASE("elevation is invariant under a common rotation about the spin axis") {
    Constellation c(desk_shell());
    const double phi = 0.7;
    for (double t : {0.0, 900.0, 3300.0}) {
        for (const auto& s : propagate(c, t)) {
            SatelliteState r = s;
            r.position = rotate_z(s.position, phi);
            r.velocity = rotate_z(s.velocity, phi);
            const double e0 = elevation(site_at(48.0, 11.0), s, t);
            const double e1 = elevation(site_at(48.0, 11.0 + rad2deg(phi)), r, t);
            CHECK(e0 == doctest::Approx(e1).epsilon(1e-9));
        }
    }
}

TEST_CASE("contact window boundaries straddle the mask") {
    Constellation c(desk_shell());
    const GroundSite g = site_at(48.0, 11.0);
    const auto ws = contact_windows(c, g, 0.0, 86400.0);
    REQUIRE(!ws.empty());
    for (size_t i = 0; i < ws.size(); ++i) {
        const auto& w = ws[i];
        CHECK(w.t_rise < w.t_max_elev);
        CHECK(w.t_max_elev < w.t_set);
        CHECK(w.max_elevation_deg >= g.min_elevation_deg);
        if (i > 0) {
            CHECK(ws[i - 1].t_rise <= w.t_rise);
        }
        const auto sat = [&](double t) { return c.state(w.sat_id, t); };
        const double mid = 0.5 * (w.t_rise + w.t_set);
        CHECK(elevation(g, sat(mid), mid) >= g.min_elevation_deg);
        if (w.t_rise > 1.0) {
            CHECK(elevation(g, sat(w.t_rise - 1.0), w.t_rise - 1.0) < g.min_elevation_deg);
        }
        if (w.t_set < 86399.0) {
            CHECK(elevation(g, sat(w.t_set + 1.0), w.t_set + 1.0) < g.min_elevation_deg);
        }
    }
}

TEST_CASE("a near-overhead pass lasts minutes, under ten") {
    Constellation c(desk_shell());
    const auto ws = contact_windows(c, site_at(48.0, 11.0), 0.0, 86400.0);
    REQUIRE(!ws.empty());
    const auto best = *std::max_element(ws.begin(), ws.end(), [](const auto& a, const auto& b) {
        return a.max_elevation_deg < b.max_elevation_deg;
    });
    CHECK(best.max_elevation_deg > 60.0);
    CHECK(best.duration() > 60.0);
    CHECK(best.duration() < 600.0);
}

TEST_CASE("raising the mask never lengthens a window") {
    Constellation c(desk_shell());
    const auto w10 = contact_windows(c, site_at(48.0, 11.0, 10.0), 0.0, 43200.0);
    const auto w20 = contact_windows(c, site_at(48.0, 11.0, 20.0), 0.0, 43200.0);
    const auto w40 = contact_windows(c, site_at(48.0, 11.0, 40.0), 0.0, 43200.0);
    REQUIRE(!w40.empty());
    auto nested = [](const std::vector<ContactWindow>& inner, const std::vector<ContactWindow>& outer) {
        for (const auto& w : inner) {
            const bool found = std::any_of(outer.begin(), outer.end(), [&](const auto& o) {
                return o.sat_id == w.sat_id && o.t_rise <= w.t_rise && w.t_set <= o.t_set &&
                       w.duration() <= o.duration();
            });
            if (!found) {
                return false;
            }
        }
        return true;
    };
    CHECK(nested(w40, w20));
    CHECK(nested(w20, w10));
    CHECK(w10.size() >= w20.size());
    CHECK(w20.size() >= w40.size());
}

TEST_CASE("mask at 90 degrees gives no windows") {
    Constellation c(desk_shell());
    CHECK(contact_windows(c, site_at(48.0, 11.0, 90.0), 0.0, 86400.0).empty());
}

TEST_CASE("eclipse fraction of an equatorial orbit at equinox") {
    Constellation c(single_equatorial());
    const double T = c.period_s();
    const int n = 100000;
    int dark = 0;
    for (int k = 0; k < n; ++k) {
        const double t = T * k / n;
        dark += in_eclipse(c.state(0, t), t) ? 1 : 0;
    }
    const double swept = double(dark) / n;

    // Independent sweep: sun along +x, circular orbit in the x-y plane,
    // shadow is the half-cylinder x < 0, |y| < R_E.
    const double a = 6371.0 + 550.0;
    int oracle_dark = 0;
    for (int k = 0; k < n; ++k) {
        const double th = 2.0 * M_PI * k / n;
        const double x = a * std::cos(th);
        const double y = a * std::sin(th);
        oracle_dark += (x < 0.0 && std::abs(y) < 6371.0) ? 1 : 0;
    }
    CHECK(swept == doctest::Approx(double(oracle_dark) / n).epsilon(2e-3));
    CHECK(swept == doctest::Approx(std::asin(6371.0 / a) / M_PI).epsilon(2e-3));
}

TEST_CASE("sun-side satellites are lit, anti-sun satellites near the axis are dark") {
    Constellation c(single_equatorial());
    CHECK_FALSE(in_eclipse(c.state(0, 0.0), 0.0));
    const double half = 0.5 * c.period_s();
    CHECK(in_eclipse(c.state(0, half), half));
}

TEST_CASE("propagation delay") {
    CHECK(propagation_delay(0.0) == 0.0);
    CHECK(propagation_delay(550.0) * 1e3 == doctest::Approx(1.834).epsilon(1e-3));
    CHECK(propagation_delay(550.0) == doctest::Approx(550.0 / 299792.458).epsilon(1e-15));
}

TEST_CASE("slant range matches the law of cosines and round trips sit in 3-5 ms at typical elevations") {
    Constellation c(desk_shell());
    const GroundSite g = site_at(48.0, 11.0);
    const auto ws = contact_windows(c, g, 0.0, 43200.0);
    REQUIRE(!ws.empty());
    int typical = 0;
    for (const auto& w : ws) {
        for (double t = w.t_rise; t <= w.t_set; t += 5.0) {
            const auto s = c.state(w.sat_id, t);
            const double e = elevation(g, s, t);
            const double d = slant_range_km(g, s, t);
            CHECK(d == doctest::Approx(slant_range_oracle(e, 550.0)).epsilon(1e-9));
            if (e >= 50.0) {
                const double rtt = 2.0 * propagation_delay(d);
                CHECK(rtt >= 3e-3);
                CHECK(rtt <= 5e-3);
                ++typical;
            }
        }
    }
    CHECK(typical > 0);
}

TEST_CASE("invalid specs are rejected") {
    ConstellationSpec s = desk_shell();
    s.planes = 0;
    CHECK_THROWS_AS(Constellation{s}, std::invalid_argument);
    s = desk_shell();
    s.altitude_km = 200.0;
    CHECK_THROWS_AS(Constellation{s}, std::invalid_argument);
    s = desk_shell();
    s.inclination_deg = 190.0;
    CHECK_THROWS_AS(Constellation{s}, std::invalid_argument);
    GroundSite g = site_at(95.0, 0.0);
    CHECK_THROWS(g.validate());
}
