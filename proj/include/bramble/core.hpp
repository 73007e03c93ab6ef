#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace bramble {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

inline constexpr double kPi = 3.14159265358979323846;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidBasisIndex : Error { using Error::Error; };
struct ZeroDirection : Error { using Error::Error; };
struct NonUnitQuaternion : Error { using Error::Error; };
struct UnstableGain : Error { using Error::Error; };
struct InfeasibleStart : Error { using Error::Error; };

/// Configuration parse/validation failure. `field` names the offending entry.
struct ConfigError : Error {
    std::string field;
    ConfigError(std::string field_name, const std::string& message)
        : Error(field_name + ": " + message), field(std::move(field_name)) {}
};

// ---------------------------------------------------------------------------
// Seeding
// ---------------------------------------------------------------------------

/// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Stream-independent seed derivation: removing one (a, b) pair never shifts
/// the randomness of any other pair.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
    return mix64(base ^ mix64(a ^ mix64(b)));
}

// ---------------------------------------------------------------------------
// Quaternions
// ---------------------------------------------------------------------------

/// Unit quaternion (w, x, y, z) used for end-effector orientation.
struct Quat {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

    Quat normalized() const {
        const double n = norm();
        return {w / n, x / n, y / n, z / n};
    }

    Quat conjugate() const { return {w, -x, -y, -z}; }

    Quat operator*(const Quat& o) const {
        return {w * o.w - x * o.x - y * o.y - z * o.z,
                w * o.x + x * o.w + y * o.z - z * o.y,
                w * o.y - x * o.z + y * o.w + z * o.x,
                w * o.z + x * o.y - y * o.x + z * o.w};
    }

    Quat operator-() const { return {-w, -x, -y, -z}; }

    static Quat identity() { return {1.0, 0.0, 0.0, 0.0}; }

    static Quat from_axis_angle(const Vec3& axis, double angle) {
        const Vec3 u = axis.normalized();
        const double half = 0.5 * angle;
        const double s = std::sin(half);
        return {std::cos(half), u.x() * s, u.y() * s, u.z() * s};
    }
};

inline double dot(const Quat& a, const Quat& b) {
    return a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
}

inline void require_unit(const Quat& q, double tol = 1e-9) {
    if (std::abs(q.norm() - 1.0) > tol)
        throw NonUnitQuaternion("quaternion norm deviates from 1 by more than tolerance");
}

/// Rotation angle (radians, in [0, pi]) carrying `a` onto `b`.
inline double rotation_angle_between(const Quat& a, const Quat& b) {
    const Quat rel = a.conjugate() * b;
    const double v = std::sqrt(rel.x * rel.x + rel.y * rel.y + rel.z * rel.z);
    return 2.0 * std::atan2(v, std::abs(rel.w));
}

/// Spherical linear interpolation with antipodal sign fix; falls back to
/// normalized linear interpolation when the subtended angle is tiny.
inline Quat slerp(const Quat& a, Quat b, double t) {
    double d = dot(a, b);
    if (d < 0.0) {
        b = -b;
        d = -d;
    }
    d = std::min(d, 1.0);
    const double gamma = std::acos(d);
    if (gamma < 1e-6) {
        Quat q{a.w + t * (b.w - a.w), a.x + t * (b.x - a.x),
               a.y + t * (b.y - a.y), a.z + t * (b.z - a.z)};
        return q.normalized();
    }
    const double s = std::sin(gamma);
    const double c0 = std::sin((1.0 - t) * gamma) / s;
    const double c1 = std::sin(t * gamma) / s;
    Quat q{c0 * a.w + c1 * b.w, c0 * a.x + c1 * b.x,
           c0 * a.y + c1 * b.y, c0 * a.z + c1 * b.z};
    return q.normalized();
}

// ---------------------------------------------------------------------------
// Branch plane frame
// ---------------------------------------------------------------------------

/// Orthonormal frame of the branch's X-Z working plane. `ex` and `ez` span the
/// plane (x = lateral, z = up); `ey` is the plane normal.
struct PlaneFrame {
    Vec3 origin{0.0, 0.0, 0.0};
    Vec3 ex{1.0, 0.0, 0.0};
    Vec3 ey{0.0, 1.0, 0.0};
    Vec3 ez{0.0, 0.0, 1.0};

    /// Vertical plane through `base` whose in-plane x axis points along the
    /// world-horizontal direction at `azimuth` radians from world +x.
    static PlaneFrame vertical(const Vec3& base, double azimuth) {
        PlaneFrame f;
        f.origin = base;
        f.ex = Vec3(std::cos(azimuth), std::sin(azimuth), 0.0);
        f.ez = Vec3(0.0, 0.0, 1.0);
        f.ey = f.ez.cross(f.ex);
        return f;
    }

    Vec3 to_local(const Vec3& p) const {
        const Vec3 d = p - origin;
        return {d.dot(ex), d.dot(ey), d.dot(ez)};
    }

    /// In-plane coordinates (x, z) of a world point.
    Vec2 in_plane(const Vec3& p) const {
        const Vec3 d = p - origin;
        return {d.dot(ex), d.dot(ez)};
    }

    /// Signed out-of-plane offset of a world point.
    double out_of_plane(const Vec3& p) const { return (p - origin).dot(ey); }

    Vec3 from_plane(double x, double z) const { return origin + x * ex + z * ez; }

    bool orthonormal(double tol = 1e-9) const {
        return std::abs(ex.norm() - 1.0) < tol && std::abs(ey.norm() - 1.0) < tol &&
               std::abs(ez.norm() - 1.0) < tol && std::abs(ex.dot(ey)) < tol &&
               std::abs(ex.dot(ez)) < tol && std::abs(ey.dot(ez)) < tol;
    }
};

}  // namespace bramble
