#pragma once

#include "bramble/core.hpp"
#include "bramble/dlo_model.hpp"
#include "bramble/planner.hpp"

#include <functional>
#include <optional>
#include <random>
#include <vector>

namespace bramble {

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Spherical region with extra apparent stiffness, standing in for snags the
/// geometric model cannot know about (entangled twigs, neighboring stems).
struct AnomalyRegion {
    Vec3 center{0.0, 0.0, 0.0};
    double radius = 0.1;
    double stiffness_multiplier = 1.0;

    bool contains(const Vec3& p) const { return (p - center).norm() <= radius; }
};

/// Simulated branch: geometry plus the force-model knobs that replace the
/// physical branch and wrist force sensor.
struct SimBranch {
    BranchParams params;
    PlaneFrame frame;                    ///< base position + working plane
    Quat rest_orientation{};             ///< grasp orientation at rest
    std::vector<AnomalyRegion> anomalies;
    double noise_sigma = 0.5;            ///< force noise per axis [N]
    double k_plane = 50.0;               ///< out-of-plane stiffness [N/m]
    std::uint64_t rng_seed = 0;

    void validate() const {
        params.validate();
        if (!frame.orthonormal(1e-9))
            throw ConfigError("frame", "axes must be orthonormal");
        if (noise_sigma < 0.0) throw ConfigError("noise_sigma", "must be >= 0");
        for (const auto& a : anomalies)
            if (a.stiffness_multiplier < 1.0)
                throw ConfigError("stiffness_multiplier", "must be >= 1");
    }

    /// Zero-force grasp pose: the branch tip of the undeformed shape.
    WaypointPose rest_grasp() const {
        return {frame.from_plane(0.0, params.length_L), rest_orientation};
    }
};

struct EndEffectorState {
    WaypointPose pose;
    double time = 0.0;
};

struct ForceReading {
    Vec3 force{0.0, 0.0, 0.0};
    double magnitude = 0.0;
    double time = 0.0;

    static ForceReading make(const Vec3& f, double t) {
        return {f, f.norm(), t};
    }
};

inline constexpr double kSensorAxisLimit = 300.0;  // FT sensor clamp [N]

/// Warm-start carrier for consecutive force queries along a trajectory.
struct ForceWarmStart {
    std::optional<BasisCoefficients> coefficients;
    std::optional<Eigen::VectorXd> multipliers;
};

// ---------------------------------------------------------------------------
// Force oracle
// ---------------------------------------------------------------------------

namespace detail {

inline Vec3 clamp_axes(Vec3 f) {
    for (int i = 0; i < 3; ++i)
        f[i] = std::clamp(f[i], -kSensorAxisLimit, kSensorAxisLimit);
    return f;
}

}  // namespace detail

/// Reaction force at the grasp: in-plane components are the negative
/// gradient of the constrained minimum bending energy with respect to the
/// endpoint (central differences, warm-started), scaled by the stiffest
/// containing anomaly; the out-of-plane component is a linear restoring
/// force. Gaussian noise per axis, each axis clamped to the sensor range.
/// Unreachable grasps read as a saturated pull back toward the base.
inline ForceReading grasp_force(const SimBranch& branch, const WaypointPose& grasp,
                                std::mt19937_64& rng,
                                ForceWarmStart* warm = nullptr) {
    const Vec2 t = branch.frame.in_plane(grasp.position);
    const double y_off = branch.frame.out_of_plane(grasp.position);
    const double L = branch.params.length_L;

    Vec3 force = Vec3::Zero();
    // The undeformed shape is the energy zero; its in-plane reaction is
    // identically zero (the one-sided rim kink of the constrained energy is
    // not a physical pull).
    const bool at_rest = std::hypot(t.x(), t.y() - L) < 1e-9;

    // Differentiating solve energies numerically needs residual-insensitive
    // values: tight tolerances plus the first-order multiplier correction.
    SolveSettings tight;
    tight.position_tolerance = 1e-8;
    tight.angle_tolerance = 1e-8;
    tight.opt_tolerance = 1e-4;
    tight.max_outer = 14;

    SolveSettings center_settings = tight;
    if (warm != nullptr && warm->coefficients) {
        center_settings.init = warm->coefficients;
        center_settings.init_multipliers = warm->multipliers;
    }

    ShapeSolution center;
    bool saturated = false;
    if (!at_rest) {
        if (std::hypot(t.x(), t.y()) > L * (1.0 + center_settings.reachability_slack)) {
            saturated = true;
        } else {
            center = solve_shape(branch.params,
                                 EndpointTarget{t.x(), t.y(), std::nullopt},
                                 center_settings);
            if (!center.converged && warm != nullptr && warm->coefficients) {
                center = solve_shape(branch.params,
                                     EndpointTarget{t.x(), t.y(), std::nullopt}, tight);
            }
            saturated = !center.converged;
        }
    }

    if (at_rest) {
        // zero in-plane reaction by definition
    } else if (saturated) {
        // Taut or snagged: saturated pull from the grasp back toward the base.
        const double norm = std::hypot(t.x(), t.y());
        const Vec2 dir = norm > 0.0 ? Vec2(t / norm) : Vec2(0.0, 1.0);
        force = -2.0 * kSensorAxisLimit *
                (dir.x() * branch.frame.ex + dir.y() * branch.frame.ez);
    } else {
        SolveSettings offset_settings = tight;
        offset_settings.init = center.coefficients;
        offset_settings.init_multipliers = center.multipliers;
        const double delta = 1e-3 * L;
        const double center_energy = corrected_energy(center);
        auto energy_at = [&](double x, double z) {
            const ShapeSolution s = solve_shape(
                branch.params, EndpointTarget{x, z, std::nullopt}, offset_settings);
            return s.converged ? std::optional<double>(corrected_energy(s))
                               : std::nullopt;
        };
        auto fd = [&](std::optional<double> plus, std::optional<double> minus) {
            if (plus && minus) return (*plus - *minus) / (2.0 * delta);
            if (plus) return (*plus - center_energy) / delta;
            if (minus) return (center_energy - *minus) / delta;
            return 0.0;
        };
        const double dUdx = fd(energy_at(t.x() + delta, t.y()),
                               energy_at(t.x() - delta, t.y()));
        const double dUdz = fd(energy_at(t.x(), t.y() + delta),
                               energy_at(t.x(), t.y() - delta));

        double mult = 1.0;
        for (const auto& a : branch.anomalies)
            if (a.contains(grasp.position)) mult = std::max(mult, a.stiffness_multiplier);

        force = -mult * (dUdx * branch.frame.ex + dUdz * branch.frame.ez);
        if (warm != nullptr) {
            warm->coefficients = center.coefficients;
            warm->multipliers = center.multipliers;
        }
    }

    force += -branch.k_plane * y_off * branch.frame.ey;

    if (branch.noise_sigma > 0.0) {
        std::normal_distribution<double> noise(0.0, branch.noise_sigma);
        for (int i = 0; i < 3; ++i) force[i] += noise(rng);
    }

    return ForceReading::make(detail::clamp_axes(force), 0.0);
}

// ---------------------------------------------------------------------------
// Pose servo
// ---------------------------------------------------------------------------

struct ServoConfig {
    double gain_kp = 2.0;        ///< [1/s]
    double dt = 0.1;             ///< [s]; gain_kp * dt must be <= 1
    double position_tol = 2e-3;  ///< [m]
    double angle_tol = 1e-2;     ///< [rad]
    int max_steps = 5000;        ///< per-segment hard cap

    void validate() const {
        if (!(dt > 0.0)) throw ConfigError("dt", "must be > 0");
        if (!(gain_kp > 0.0)) throw ConfigError("gain_kp", "must be > 0");
        if (gain_kp * dt > 1.0)
            throw UnstableGain("gain_kp * dt exceeds 1");
    }
};

/// One proportional task-space step toward the target pose.
inline EndEffectorState pose_servo_step(const EndEffectorState& state,
                                        const WaypointPose& target, double gain_kp,
                                        double dt) {
    if (!(dt > 0.0) || !(gain_kp > 0.0))
        throw ConfigError("servo", "gain_kp and dt must be > 0");
    if (gain_kp * dt > 1.0) throw UnstableGain("gain_kp * dt exceeds 1");
    const double alpha = gain_kp * dt;
    EndEffectorState next;
    next.pose.position = state.pose.position +
                         alpha * (target.position - state.pose.position);
    next.pose.orientation =
        slerp(state.pose.orientation, target.orientation, std::min(1.0, alpha));
    next.time = state.time + dt;
    return next;
}

// ---------------------------------------------------------------------------
// Segment execution
// ---------------------------------------------------------------------------

enum class MonitorDecision { Continue, Abort };
using ForceMonitor = std::function<MonitorDecision(const ForceReading&)>;

enum class SegmentStatus { Completed, Aborted, StepLimit };

struct SegmentResult {
    SegmentStatus status = SegmentStatus::Completed;
    EndEffectorState state;
    std::vector<ForceReading> readings;
    std::vector<WaypointPose> poses;  ///< pose after each step, 1:1 with readings
};

inline bool pose_converged(const EndEffectorState& state, const WaypointPose& target,
                           const ServoConfig& servo) {
    return (state.pose.position - target.position).norm() < servo.position_tol &&
           rotation_angle_between(state.pose.orientation, target.orientation) <
               servo.angle_tol;
}

/// Servo toward `waypoint`, emitting one force reading per step, until
/// convergence or the monitor aborts. Convergence is checked before stepping
/// so an already-reached way-point produces no readings.
inline SegmentResult run_segment(const SimBranch& branch, const EndEffectorState& start,
                                 const WaypointPose& waypoint, const ServoConfig& servo,
                                 const ForceMonitor& monitor, std::mt19937_64& rng,
                                 ForceWarmStart* warm = nullptr) {
    servo.validate();
    SegmentResult result;
    result.state = start;
    for (int step = 0; step < servo.max_steps; ++step) {
        if (pose_converged(result.state, waypoint, servo)) return result;
        result.state = pose_servo_step(result.state, waypoint, servo.gain_kp, servo.dt);
        ForceReading reading = grasp_force(branch, result.state.pose, rng, warm);
        reading.time = result.state.time;
        result.readings.push_back(reading);
        result.poses.push_back(result.state.pose);
        if (monitor && monitor(reading) == MonitorDecision::Abort) {
            result.status = SegmentStatus::Aborted;
            return result;
        }
    }
    result.status = pose_converged(result.state, waypoint, servo)
                        ? SegmentStatus::Completed
                        : SegmentStatus::StepLimit;
    return result;
}

}  // namespace bramble
