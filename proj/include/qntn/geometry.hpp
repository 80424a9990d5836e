#pragma once

#include <cmath>

namespace qntn {

// Physical constants shared by the geometry and channel code.
inline constexpr double kEarthRadiusKm = 6371.0;
inline constexpr double kMuEarth = 398600.4418;            // km^3/s^2
inline constexpr double kSpeedOfLightKmS = 299792.458;     // km/s
inline constexpr double kEarthRotationRadS = 7.2921150e-5; // sidereal rate
inline constexpr double kSecondsPerYear = 365.25 * 86400.0;
inline constexpr double kObliquityDeg = 23.4393;
inline constexpr double kPi = 3.14159265358979323846;

inline constexpr double deg2rad(double d) { return d * kPi / 180.0; }
inline constexpr double rad2deg(double r) { return r * 180.0 / kPi; }

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 unit() const {
        const double n = norm();
        return n > 0.0 ? *this * (1.0 / n) : Vec3{};
    }
};

// Rotation about the z axis by angle (radians).
inline Vec3 rotate_z(const Vec3& v, double angle) {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    return {c * v.x - s * v.y, s * v.x + c * v.y, v.z};
}

} // namespace qntn
