#pragma once

#include "bramble/core.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <limits>
#include <optional>
#include <vector>

namespace bramble {

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Physical description of a planar flexible branch, modeled as a
/// minimum-bending-energy curve of fixed arc length clamped at the base.
struct BranchParams {
    double length_L = 0.6;              ///< arc length base -> grasp point [m]
    double flexural_rigidity_EI = 0.5;  ///< E*I [N m^2]
    double base_angle_theta0 = kPi / 2; ///< clamped tangent angle at s = 0
    int num_harmonics = 5;              ///< harmonic pairs in the angle basis
    int quadrature_points = 100;        ///< Simpson intervals over [0, L], even

    int basis_size() const { return 2 * num_harmonics + 2; }

    void validate() const {
        if (!(length_L > 0.0))
            throw ConfigError("length_L", "must be > 0");
        if (!(flexural_rigidity_EI > 0.0))
            throw ConfigError("flexural_rigidity_EI", "must be > 0");
        if (num_harmonics < 1)
            throw ConfigError("num_harmonics", "must be >= 1");
        if (quadrature_points < 10 || quadrature_points % 2 != 0)
            throw ConfigError("quadrature_points", "must be even and >= 10");
    }
};

/// Desired grasp-point location in the branch plane, with an optional tip
/// tangent angle. When `tip_angle` is absent that constraint is dropped.
struct EndpointTarget {
    double x = 0.0;
    double z = 0.0;
    std::optional<double> tip_angle;
};

/// Weights on the angle basis e1 = 1, e2 = s, e_{2i+1} = sin(2*pi*i*s/L),
/// e_{2i+2} = cos(2*pi*i*s/L).
using BasisCoefficients = Eigen::VectorXd;

enum class SolveStatus {
    Converged,      ///< residuals and first-order optimality within tolerance
    IterationLimit, ///< iteration or time budget hit before convergence
    Unreachable,    ///< target outside the closed reachable disk
};

/// Solved branch shape: coefficients plus the discretized curve.
struct ShapeSolution {
    BasisCoefficients coefficients;
    Eigen::VectorXd s_grid;            ///< uniform grid 0..L
    Eigen::VectorXd theta;             ///< tangent angle at each grid point
    std::vector<Vec2> positions;       ///< (x, z) at each grid point; [0] = (0,0)
    double energy = 0.0;               ///< bending energy [J]
    double endpoint_residual = 0.0;    ///< |P(L) - target| [m]
    double base_angle_residual = 0.0;  ///< |theta(0) - theta0| [rad]
    std::optional<double> tip_angle_residual;
    double optimality = 0.0;           ///< final inf-norm of the AL gradient
    Eigen::VectorXd multipliers;       ///< final AL multipliers (warm-start aid)
    Eigen::VectorXd constraint_values; ///< signed residuals [cx, cz, c0, (cL)]
    bool converged = false;
    SolveStatus status = SolveStatus::IterationLimit;
    int iterations = 0;                ///< inner minimizer iterations consumed
};

/// Energy estimate corrected to first order for the remaining constraint
/// violation: U + lambda . c. Insensitive to the solve tolerance, which
/// matters when differentiating solve energies numerically.
inline double corrected_energy(const ShapeSolution& sol) {
    if (sol.multipliers.size() != sol.constraint_values.size()) return sol.energy;
    return sol.energy + sol.multipliers.dot(sol.constraint_values);
}

/// Knobs for solve_shape. Values < 0 select the defaults derived from the
/// branch parameters (position tolerance scales with L).
struct SolveSettings {
    std::optional<BasisCoefficients> init;  ///< warm start; absent = heuristic
    std::optional<Eigen::VectorXd> init_multipliers;  ///< AL warm start
    double position_tolerance = -1.0;       ///< default 1e-3 * L
    double angle_tolerance = 1e-2;          ///< [rad]
    double opt_tolerance = 1e-6;
    double reachability_slack = 1e-3;
    int max_outer = 8;
    int max_inner = 500;
    double time_budget = 0.0;               ///< wall seconds; 0 = unlimited

    double position_tol_for(const BranchParams& p) const {
        return position_tolerance >= 0.0 ? position_tolerance : 1e-3 * p.length_L;
    }
};

// ---------------------------------------------------------------------------
// Basis evaluation
// ---------------------------------------------------------------------------

/// Value of basis function `index` (1-based, as in e1..e_{2i+2}) at arc
/// length s.
inline double basis_eval(const BranchParams& params, int index, double s) {
    if (index < 1 || index > params.basis_size())
        throw InvalidBasisIndex("basis index " + std::to_string(index) +
                                " outside 1.." + std::to_string(params.basis_size()));
    if (index == 1) return 1.0;
    if (index == 2) return s;
    const int i = (index - 1) / 2;  // harmonic number for e_{2i+1}, e_{2i+2}
    const double arg = 2.0 * kPi * i * s / params.length_L;
    return (index % 2 == 1) ? std::sin(arg) : std::cos(arg);
}

/// Derivative of basis function `index` with respect to s.
inline double basis_derivative(const BranchParams& params, int index, double s) {
    if (index < 1 || index > params.basis_size())
        throw InvalidBasisIndex("basis index " + std::to_string(index) +
                                " outside 1.." + std::to_string(params.basis_size()));
    if (index == 1) return 0.0;
    if (index == 2) return 1.0;
    const int i = (index - 1) / 2;
    const double k = 2.0 * kPi * i / params.length_L;
    const double arg = k * s;
    return (index % 2 == 1) ? k * std::cos(arg) : -k * std::sin(arg);
}

inline double theta_of_s(const BranchParams& params, const BasisCoefficients& coeffs,
                         double s) {
    double acc = 0.0;
    for (int j = 0; j < coeffs.size(); ++j)
        acc += coeffs[j] * basis_eval(params, j + 1, s);
    return acc;
}

// ---------------------------------------------------------------------------
// Discretization
// ---------------------------------------------------------------------------

/// Quadrature tables for one BranchParams: basis values/derivatives on the
/// uniform Simpson grid. Reusable across many evaluations and solves.
class DiscretizedBranch {
public:
    explicit DiscretizedBranch(const BranchParams& params) : params_(params) {
        params.validate();
        const int m = params.quadrature_points;
        const int n = params.basis_size();
        const double h = params.length_L / m;
        s_.resize(m + 1);
        w_.resize(m + 1);
        for (int j = 0; j <= m; ++j) {
            s_[j] = h * j;
            const double c = (j == 0 || j == m) ? 1.0 : (j % 2 == 1 ? 4.0 : 2.0);
            w_[j] = c * h / 3.0;
        }
        B_.resize(m + 1, n);
        Bp_.resize(m + 1, n);
        for (int j = 0; j <= m; ++j)
            for (int k = 0; k < n; ++k) {
                B_(j, k) = basis_eval(params, k + 1, s_[j]);
                Bp_(j, k) = basis_derivative(params, k + 1, s_[j]);
            }
    }

    const BranchParams& params() const { return params_; }
    const Eigen::VectorXd& s_grid() const { return s_; }
    const Eigen::VectorXd& weights() const { return w_; }

    Eigen::VectorXd theta(const BasisCoefficients& a) const { return B_ * a; }
    Eigen::VectorXd theta_rate(const BasisCoefficients& a) const { return Bp_ * a; }

    /// Bending energy 1/2 * EI * integral (dtheta/ds)^2 ds via Simpson.
    double energy(const BasisCoefficients& a) const {
        const Eigen::VectorXd tp = Bp_ * a;
        return 0.5 * params_.flexural_rigidity_EI * tp.dot(w_.cwiseProduct(tp));
    }

    Eigen::VectorXd energy_gradient(const BasisCoefficients& a) const {
        const Eigen::VectorXd tp = Bp_ * a;
        return params_.flexural_rigidity_EI * (Bp_.transpose() * w_.cwiseProduct(tp));
    }

    /// Endpoint P(L) = (integral cos theta, integral sin theta).
    Vec2 endpoint(const BasisCoefficients& a) const {
        const Eigen::VectorXd t = B_ * a;
        return {w_.dot(t.array().cos().matrix()), w_.dot(t.array().sin().matrix())};
    }

    /// 2 x n Jacobian of the endpoint with respect to the coefficients.
    Eigen::MatrixXd endpoint_jacobian(const BasisCoefficients& a) const {
        const Eigen::VectorXd t = B_ * a;
        Eigen::MatrixXd jac(2, a.size());
        jac.row(0) = -(w_.cwiseProduct(t.array().sin().matrix())).transpose() * B_;
        jac.row(1) = (w_.cwiseProduct(t.array().cos().matrix())).transpose() * B_;
        return jac;
    }

    const Eigen::MatrixXd& basis_values() const { return B_; }
    const Eigen::MatrixXd& basis_derivatives() const { return Bp_; }

    double theta_at_base(const BasisCoefficients& a) const { return B_.row(0).dot(a); }
    double theta_at_tip(const BasisCoefficients& a) const {
        return B_.row(B_.rows() - 1).dot(a);
    }
    Eigen::VectorXd theta_base_gradient() const { return B_.row(0).transpose(); }
    Eigen::VectorXd theta_tip_gradient() const {
        return B_.row(B_.rows() - 1).transpose();
    }

    /// Cumulative (x, z) along the grid. Even nodes use composite Simpson;
    /// odd nodes integrate the quadratic interpolant over the half pair.
    std::vector<Vec2> positions(const BasisCoefficients& a) const {
        const Eigen::VectorXd t = B_ * a;
        const int m = params_.quadrature_points;
        const double h = params_.length_L / m;
        std::vector<Vec2> out(m + 1);
        out[0] = Vec2::Zero();
        Eigen::VectorXd fx = t.array().cos();
        Eigen::VectorXd fz = t.array().sin();
        for (int j = 0; j + 2 <= m; j += 2) {
            const Vec2 base = out[j];
            // half-pair: h/12 * (5 f0 + 8 f1 - f2)
            out[j + 1] = base + (h / 12.0) * Vec2(5.0 * fx[j] + 8.0 * fx[j + 1] - fx[j + 2],
                                                  5.0 * fz[j] + 8.0 * fz[j + 1] - fz[j + 2]);
            out[j + 2] = base + (h / 3.0) * Vec2(fx[j] + 4.0 * fx[j + 1] + fx[j + 2],
                                                 fz[j] + 4.0 * fz[j + 1] + fz[j + 2]);
        }
        return out;
    }

private:
    BranchParams params_;
    Eigen::VectorXd s_;
    Eigen::VectorXd w_;
    Eigen::MatrixXd B_;
    Eigen::MatrixXd Bp_;
};

/// Position of the curve point at arc length s (Simpson over [0, s]).
/// position_of_s(.., 0) is exactly (0, 0).
inline Vec2 position_of_s(const BranchParams& params, const BasisCoefficients& coeffs,
                          double s) {
    if (s == 0.0) return Vec2::Zero();
    const int m = params.quadrature_points;
    const double h = s / m;
    double ix = 0.0, iz = 0.0;
    for (int j = 0; j <= m; ++j) {
        const double c = (j == 0 || j == m) ? 1.0 : (j % 2 == 1 ? 4.0 : 2.0);
        const double t = theta_of_s(params, coeffs, h * j);
        ix += c * std::cos(t);
        iz += c * std::sin(t);
    }
    return {ix * h / 3.0, iz * h / 3.0};
}

inline double potential_energy(const BranchParams& params, const BasisCoefficients& coeffs) {
    return DiscretizedBranch(params).energy(coeffs);
}

// ---------------------------------------------------------------------------
// Constrained solve
// ---------------------------------------------------------------------------

/// Straight-branch coefficients bent toward the target: a linear term points
/// the chord at the target bearing, and a first-harmonic term bows the curve
/// by the arc-length slack. The harmonic part also moves the start off the
/// singular straight configuration, where the endpoint constraints have zero
/// first-order sensitivity.
inline BasisCoefficients initial_guess(const BranchParams& params,
                                       const EndpointTarget& target) {
    BasisCoefficients a = BasisCoefficients::Zero(params.basis_size());
    a[0] = params.base_angle_theta0;
    const double r = std::hypot(target.x, target.z);
    if (r > 0.0) {
        const double bearing = std::atan2(target.z, target.x);
        a[1] = 2.0 * (bearing - params.base_angle_theta0) / params.length_L;
        const double slack = std::max(0.0, 1.0 - r / params.length_L);
        a[2] = 1.2 * std::sqrt(slack);
    }
    return a;
}

namespace detail {

/// Augmented-Lagrangian merit value and gradient for the current multipliers.
/// Keeps preallocated per-solve workspace; evaluations are allocation-free.
struct AugLag {
    const DiscretizedBranch& disc;
    EndpointTarget target;
    double theta0;
    Eigen::VectorXd lambda;  // multipliers: [cx, cz, ctheta0, (cthetaL)]
    double mu = 10.0;

    mutable Eigen::VectorXd th, tp, q;  // grid workspace

    AugLag(const DiscretizedBranch& d, const EndpointTarget& t, double th0,
           Eigen::VectorXd lam, double mu0)
        : disc(d), target(t), theta0(th0), lambda(std::move(lam)), mu(mu0) {
        const auto rows = d.basis_values().rows();
        th.resize(rows);
        tp.resize(rows);
        q.resize(rows);
    }

    int constraint_count() const { return target.tip_angle ? 4 : 3; }

    Eigen::VectorXd constraints(const BasisCoefficients& a) const {
        th.noalias() = disc.basis_values() * a;
        const Eigen::VectorXd& w = disc.weights();
        double cx = 0.0, cz = 0.0;
        for (int j = 0; j < th.size(); ++j) {
            cx += w[j] * std::cos(th[j]);
            cz += w[j] * std::sin(th[j]);
        }
        Eigen::VectorXd c(constraint_count());
        c[0] = cx - target.x;
        c[1] = cz - target.z;
        c[2] = th[0] - theta0;
        if (target.tip_angle) c[3] = th[th.size() - 1] - *target.tip_angle;
        return c;
    }

    double value(const BasisCoefficients& a) const {
        th.noalias() = disc.basis_values() * a;
        tp.noalias() = disc.basis_derivatives() * a;
        const Eigen::VectorXd& w = disc.weights();
        double quad = 0.0, cx = 0.0, cz = 0.0;
        for (int j = 0; j < th.size(); ++j) {
            quad += w[j] * tp[j] * tp[j];
            cx += w[j] * std::cos(th[j]);
            cz += w[j] * std::sin(th[j]);
        }
        const double u = 0.5 * disc.params().flexural_rigidity_EI * quad;
        double c0 = cx - target.x;
        double c1 = cz - target.z;
        double c2 = th[0] - theta0;
        double acc = u + lambda[0] * c0 + lambda[1] * c1 + lambda[2] * c2 +
                     0.5 * mu * (c0 * c0 + c1 * c1 + c2 * c2);
        if (target.tip_angle) {
            const double c3 = th[th.size() - 1] - *target.tip_angle;
            acc += lambda[3] * c3 + 0.5 * mu * c3 * c3;
        }
        return acc;
    }

    void gradient_into(const BasisCoefficients& a, Eigen::VectorXd& g) const {
        th.noalias() = disc.basis_values() * a;
        tp.noalias() = disc.basis_derivatives() * a;
        const Eigen::VectorXd& w = disc.weights();
        const double ei = disc.params().flexural_rigidity_EI;
        double cx = 0.0, cz = 0.0;
        for (int j = 0; j < th.size(); ++j) {
            cx += w[j] * std::cos(th[j]);
            cz += w[j] * std::sin(th[j]);
        }
        const double y0 = lambda[0] + mu * (cx - target.x);
        const double y1 = lambda[1] + mu * (cz - target.z);
        const double y2 = lambda[2] + mu * (th[0] - theta0);
        // q = w .* (EI*tp gathered separately; constraint part on values grid)
        for (int j = 0; j < th.size(); ++j)
            q[j] = w[j] * (-std::sin(th[j]) * y0 + std::cos(th[j]) * y1);
        g.noalias() = disc.basis_derivatives().transpose() * (ei * w.cwiseProduct(tp));
        g.noalias() += disc.basis_values().transpose() * q;
        g.noalias() += disc.basis_values().row(0).transpose() * y2;
        if (target.tip_angle) {
            const double y3 =
                lambda[3] + mu * (th[th.size() - 1] - *target.tip_angle);
            g.noalias() +=
                disc.basis_values().row(th.size() - 1).transpose() * y3;
        }
    }

    Eigen::VectorXd gradient(const BasisCoefficients& a) const {
        Eigen::VectorXd g(a.size());
        gradient_into(a, g);
        return g;
    }
};

/// BFGS (inverse-Hessian form) with Armijo backtracking. Returns consumed
/// iterations; stops on gradient norm, iteration cap, deadline, or stall.
inline int bfgs_minimize(const AugLag& f, BasisCoefficients& a, double grad_tol,
                         int max_iters,
                         const std::chrono::steady_clock::time_point* deadline) {
    const int n = static_cast<int>(a.size());
    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd g(n), g_new(n), p(n), s(n), y(n), Hy(n), trial(n);
    double fa = f.value(a);
    f.gradient_into(a, g);
    int used = 0;
    for (; used < max_iters; ++used) {
        if (g.lpNorm<Eigen::Infinity>() <= grad_tol) break;
        if (deadline && std::chrono::steady_clock::now() > *deadline) break;
        p.noalias() = -(H * g);
        double slope = g.dot(p);
        if (!(slope < 0.0)) {  // reset on loss of descent direction
            H.setIdentity();
            p = -g;
            slope = g.dot(p);
        }
        double step = 1.0;
        double f_new = 0.0;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            trial = a + step * p;
            f_new = f.value(trial);
            if (f_new <= fa + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;  // flat to machine precision
        s = step * p;
        a = trial;
        f.gradient_into(a, g_new);
        y = g_new - g;
        const double ys = y.dot(s);
        if (ys > 1e-12 * y.norm() * s.norm()) {
            Hy.noalias() = H * y;
            const double yHy = y.dot(Hy);
            H += ((ys + yHy) / (ys * ys)) * (s * s.transpose());
            H -= (Hy * s.transpose() + s * Hy.transpose()) / ys;
        }
        fa = f_new;
        g = g_new;
    }
    return used;
}

}  // namespace detail

/// Minimum-bending-energy shape subject to the endpoint position constraint,
/// the clamped base angle, and (optionally) the tip angle. Augmented
/// Lagrangian over the basis coefficients with an inner BFGS minimizer.
inline ShapeSolution solve_shape(const BranchParams& params, const EndpointTarget& target,
                                 const SolveSettings& settings = {}) {
    params.validate();
    const DiscretizedBranch disc(params);

    ShapeSolution sol;
    sol.s_grid = disc.s_grid();

    const double reach = params.length_L * (1.0 + settings.reachability_slack);
    const double target_norm = std::hypot(target.x, target.z);

    BasisCoefficients a = settings.init && settings.init->size() == params.basis_size()
                              ? *settings.init
                              : initial_guess(params, target);

    auto finalize = [&](SolveStatus status) {
        sol.coefficients = a;
        sol.theta = disc.theta(a);
        sol.positions = disc.positions(a);
        sol.energy = disc.energy(a);
        const Vec2 p = disc.endpoint(a);
        sol.endpoint_residual = std::hypot(p.x() - target.x, p.y() - target.z);
        sol.base_angle_residual = std::abs(disc.theta_at_base(a) - params.base_angle_theta0);
        if (target.tip_angle)
            sol.tip_angle_residual = std::abs(disc.theta_at_tip(a) - *target.tip_angle);
        sol.constraint_values.resize(target.tip_angle ? 4 : 3);
        sol.constraint_values[0] = p.x() - target.x;
        sol.constraint_values[1] = p.y() - target.z;
        sol.constraint_values[2] = disc.theta_at_base(a) - params.base_angle_theta0;
        if (target.tip_angle)
            sol.constraint_values[3] = disc.theta_at_tip(a) - *target.tip_angle;
        sol.status = status;
        return sol;
    };

    if (target_norm > reach) {
        sol.optimality = std::numeric_limits<double>::infinity();
        return finalize(SolveStatus::Unreachable);
    }

    const double pos_tol = settings.position_tol_for(params);

    std::chrono::steady_clock::time_point deadline;
    const bool timed = settings.time_budget > 0.0;
    if (timed)
        deadline = std::chrono::steady_clock::now() +
                   std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                       std::chrono::duration<double>(settings.time_budget));

    const int n_con = target.tip_angle ? 4 : 3;
    detail::AugLag f{disc, target, params.base_angle_theta0,
                     Eigen::VectorXd::Zero(n_con), 10.0};
    if (settings.init_multipliers && settings.init_multipliers->size() == n_con)
        f.lambda = *settings.init_multipliers;

    bool ok = false;
    for (int outer = 0; outer < settings.max_outer; ++outer) {
        // Tolerance ladder, skipped ahead when entering already near a
        // stationary point (warm starts).
        const double g_entry = f.gradient(a).lpNorm<Eigen::Infinity>();
        const double inner_tol = std::max(
            settings.opt_tolerance,
            std::min(1e-3 * std::pow(0.1, outer), 0.05 * g_entry));
        const int used = detail::bfgs_minimize(f, a, inner_tol, settings.max_inner,
                                               timed ? &deadline : nullptr);
        sol.iterations += used;
        const Eigen::VectorXd c = f.constraints(a);
        const double pos_res = std::hypot(c[0], c[1]);
        const double base_res = std::abs(c[2]);
        const double tip_res = target.tip_angle ? std::abs(c[3]) : 0.0;
        const bool feasible = pos_res <= pos_tol &&
                              base_res <= settings.angle_tolerance &&
                              tip_res <= settings.angle_tolerance;
        sol.optimality = f.gradient(a).lpNorm<Eigen::Infinity>();
        if (feasible && sol.optimality <= settings.opt_tolerance) {
            ok = true;
            break;
        }
        if (timed && std::chrono::steady_clock::now() > deadline) break;
        if (used == 0 && pos_res > pos_tol) {
            // Stationary but infeasible with no inner progress: stuck at a
            // singular configuration. Deterministic harmonic kick.
            a[2] += 0.1 * (outer + 1);
        }
        f.lambda += f.mu * c;
        // Escalating the penalty once feasible only degrades conditioning.
        if (!feasible) f.mu = std::min(f.mu * 10.0, 1e8);
    }

    sol.converged = ok;
    sol.multipliers = f.lambda;
    return finalize(ok ? SolveStatus::Converged : SolveStatus::IterationLimit);
}

}  // namespace bramble
