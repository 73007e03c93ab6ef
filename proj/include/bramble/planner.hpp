#pragma once

#include "bramble/core.hpp"
#include "bramble/dlo_model.hpp"
#include "bramble/safety_map.hpp"

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <vector>

namespace bramble {

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

struct WaypointPose {
    Vec3 position{0.0, 0.0, 0.0};
    Quat orientation{};
};

struct GoalRegion {
    Vec3 center{0.0, 0.0, 0.0};
    double radius_R = 0.05;
    Quat goal_orientation{};
};

/// Branch-derived workspace constraint: way-points must stay in the upper
/// half-ball of radius height_h around the branch base, and the safety gate
/// classifies their in-plane projection through plane_frame.
struct BranchConstraint {
    Vec3 base_point{0.0, 0.0, 0.0};
    double height_h = 0.6;
    PlaneFrame plane_frame;

    void validate() const {
        if (!(height_h > 0.0)) throw ConfigError("height_h", "must be > 0");
        if (!plane_frame.orthonormal(1e-9))
            throw ConfigError("plane_frame", "axes must be orthonormal");
    }
};

struct PlannerConfig {
    int max_iterations_N = 5000;
    double step_delta_q = 0.05;      ///< steering step [m]
    double neighbor_radius = 0.0;    ///< fixed rewire radius; 0 = shrinking
                                     ///< min(gamma*(log n/n)^(1/3), 4*step)
    double goal_bias = 0.05;
    std::uint64_t rng_seed = 0;
    double penalty_epsilon = 1e-3;   ///< [m]
    double penalty_radius_r_prime = 0.15;  ///< [m]
    double penalty_weight = 0.5;
    double time_budget = 400.0;      ///< planning seconds (virtual clock)
    /// Deterministic planning-time accounting: one iteration costs this many
    /// seconds against time_budget regardless of the host machine.
    double virtual_seconds_per_iteration = 0.004;

    void validate() const {
        if (max_iterations_N < 1) throw ConfigError("max_iterations_N", "must be >= 1");
        if (!(step_delta_q > 0.0)) throw ConfigError("step_delta_q", "must be > 0");
        if (goal_bias < 0.0 || goal_bias > 0.2)
            throw ConfigError("goal_bias", "must be in [0, 0.2]");
        if (!(penalty_epsilon > 0.0)) throw ConfigError("penalty_epsilon", "must be > 0");
        if (!(time_budget > 0.0)) throw ConfigError("time_budget", "must be > 0");
        if (!(virtual_seconds_per_iteration >= 0.0))
            throw ConfigError("virtual_seconds_per_iteration", "must be >= 0");
    }
};

struct TreeNode {
    Vec3 position{0.0, 0.0, 0.0};
    int parent = -1;
    double cost = 0.0;     ///< parent cost + edge length + penalty
    double penalty = 0.0;  ///< node's own replanning penalty term
    std::vector<int> children;
};

struct PlanTree {
    std::vector<TreeNode> nodes;
    int root = 0;
};

struct PlanPath {
    std::vector<WaypointPose> waypoints;
    std::vector<double> cum_length;  ///< arc length from start to waypoint i
    double total_length = 0.0;
    double final_offset = 0.0;       ///< last waypoint to goal center [m]
    double planning_time = 0.0;      ///< virtual seconds consumed
    int iterations_used = 0;
};

enum class PlanStatus { Success, Timeout };

struct PlanDiagnostics {
    PlanTree tree;
    std::vector<double> best_cost_history;  ///< best goal cost per iteration
    int penalty_nodes = 0;              ///< inserted nodes with penalty > 0
    int samples_in_penalty_radius = 0;  ///< samples within r' of prev path
    int rejected_by_gate = 0;
    double wall_seconds = 0.0;
};

struct PlanResult {
    PlanStatus status = PlanStatus::Timeout;
    PlanPath path;
    PlanDiagnostics diagnostics;
};

/// Safety predicate used to admit tree nodes; defaults to the exact
/// geometric-model gate.
using SafetyPredicate = std::function<bool(const Vec3&)>;

// ---------------------------------------------------------------------------
// Primitive operations
// ---------------------------------------------------------------------------

/// Membership in the branch workspace constraint (upper half-ball).
inline bool satisfies_hemisphere(const Vec3& q, const BranchConstraint& c) {
    return (q - c.base_point).norm() <= c.height_h && q.z() >= c.base_point.z();
}

/// Exact safety gate: project into the branch plane and require the
/// geometric model to classify the endpoint Safe (Caution and Risky are
/// both rejected).
inline bool safety_gate(const Vec3& q, const BranchConstraint& constraint,
                        const BranchParams& params,
                        const ClassifyOptions& options = {}) {
    const Vec2 t = constraint.plane_frame.in_plane(q);
    return classify_endpoint(params, EndpointTarget{t.x(), t.y(), std::nullopt},
                             options) == SafetyLabel::Safe;
}

/// Precomputed raster of the safety gate over the reachable upper half-disk
/// of the branch plane. Labels depend only on (params, constraint, cell), not
/// on query order, so planning with the cached gate stays deterministic.
class BranchSafetyGate {
public:
    BranchSafetyGate(const BranchParams& params, const BranchConstraint& constraint,
                     double cell = 0.0, const ClassifyOptions& options = {})
        : constraint_(constraint) {
        params.validate();
        constraint.validate();
        cell_ = cell > 0.0 ? cell : params.length_L / 40.0;
        const double reach =
            params.length_L * (1.0 + options.solve.reachability_slack);
        x_min_ = -(reach + cell_);
        nx_ = static_cast<int>(std::ceil(2.0 * (reach + cell_) / cell_));
        nz_ = static_cast<int>(std::ceil((reach + cell_) / cell_));
        // In-plane projections of constraint-satisfying queries always land
        // inside the reachable disk, so rim cells are classified at their
        // center pulled just inside the disk; cells clear of it stay Risky.
        const double clamp_r = params.length_L * (1.0 - 1e-3);
        const double half_diag = 0.5 * cell_ * std::sqrt(2.0);
        std::vector<Vec2> centers;
        std::vector<std::size_t> solve_idx;
        labels_.assign(static_cast<std::size_t>(nx_) * nz_, SafetyLabel::Risky);
        for (int iz = 0; iz < nz_; ++iz)
            for (int ix = 0; ix < nx_; ++ix) {
                Vec2 p(x_min_ + (ix + 0.5) * cell_, (iz + 0.5) * cell_);
                const double r = p.norm();
                if (r > reach + half_diag) continue;
                if (r > clamp_r) p *= clamp_r / r;
                solve_idx.push_back(static_cast<std::size_t>(iz) * nx_ + ix);
                centers.push_back(p);
            }
        const auto labels = detail::classify_batch(params, centers, options);
        for (std::size_t k = 0; k < solve_idx.size(); ++k)
            labels_[solve_idx[k]] = labels[k];
    }

    double cell_size() const { return cell_; }
    const BranchConstraint& constraint() const { return constraint_; }

    SafetyLabel label_at(const Vec2& in_plane) const {
        const int ix = static_cast<int>(std::floor((in_plane.x() - x_min_) / cell_));
        const int iz = static_cast<int>(std::floor(in_plane.y() / cell_));
        if (ix < 0 || ix >= nx_ || iz < 0 || iz >= nz_) return SafetyLabel::Risky;
        return labels_[static_cast<std::size_t>(iz) * nx_ + ix];
    }

    bool is_safe(const Vec3& q) const {
        return label_at(constraint_.plane_frame.in_plane(q)) == SafetyLabel::Safe;
    }

    SafetyPredicate predicate() const {
        return [this](const Vec3& q) { return is_safe(q); };
    }

private:
    BranchConstraint constraint_;
    double cell_ = 0.0;
    double x_min_ = 0.0;
    int nx_ = 0, nz_ = 0;
    std::vector<SafetyLabel> labels_;
};

/// One steering step of at most delta_q from q_near toward q_rand.
inline Vec3 steer(const Vec3& q_near, const Vec3& q_rand, double delta_q) {
    const Vec3 d = q_rand - q_near;
    const double dist = d.norm();
    if (dist == 0.0) throw ZeroDirection("steer requires q_near != q_rand");
    return q_near + (std::min(delta_q, dist) / dist) * d;
}

namespace detail {

inline Vec3 uniform_in_ball(std::mt19937_64& rng, double radius) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    while (true) {
        const Vec3 v(u(rng), u(rng), u(rng));
        if (v.squaredNorm() <= 1.0) return radius * v;
    }
}

}  // namespace detail

/// Sample a position obeying the branch constraint: with probability
/// goal_bias uniform in the goal ball, otherwise uniform in the upper
/// half-ball around the branch base. Rejection keeps every returned sample
/// inside the constraint.
inline Vec3 sample_constrained(const BranchConstraint& constraint, const GoalRegion& goal,
                               const PlannerConfig& config, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int attempt = 0; attempt < 100000; ++attempt) {
        Vec3 q;
        if (u01(rng) < config.goal_bias) {
            q = goal.center + detail::uniform_in_ball(rng, goal.radius_R);
        } else {
            q = constraint.base_point + detail::uniform_in_ball(rng, constraint.height_h);
        }
        if (satisfies_hemisphere(q, constraint)) return q;
    }
    throw Error("sample_constrained: constraint region appears empty");
}

/// Replanning penalty (applied within r' of the previously violated path):
/// weight / (min distance to the path way-points + epsilon).
inline double penalty_cost(const Vec3& q, const PlanPath* prev_path,
                           const PlannerConfig& config) {
    if (prev_path == nullptr || prev_path->waypoints.empty()) return 0.0;
    double d2 = std::numeric_limits<double>::infinity();
    for (const auto& wp : prev_path->waypoints)
        d2 = std::min(d2, (wp.position - q).squaredNorm());
    const double d = std::sqrt(d2);
    if (d > config.penalty_radius_r_prime) return 0.0;
    return config.penalty_weight / (d + config.penalty_epsilon);
}

// ---------------------------------------------------------------------------
// Orientation interpolation
// ---------------------------------------------------------------------------

/// Assign way-point orientations by SLERP between q_start and q_goal at
/// parameter t = cumulative arc length / total length. A single-way-point
/// path gets q_goal (t = 1). Rotation is thereby distributed proportionally
/// to translation.
inline PlanPath interpolate_orientations(PlanPath path, const Quat& q_start,
                                         Quat q_goal) {
    if (path.waypoints.empty()) throw Error("interpolate_orientations: empty path");
    require_unit(q_start);
    require_unit(q_goal);
    if (dot(q_start, q_goal) < 0.0) q_goal = -q_goal;
    if (path.waypoints.size() == 1 || path.total_length <= 0.0) {
        for (auto& wp : path.waypoints) wp.orientation = q_goal;
        return path;
    }
    for (std::size_t i = 0; i < path.waypoints.size(); ++i) {
        const double t = path.cum_length[i] / path.total_length;
        path.waypoints[i].orientation = slerp(q_start, q_goal, t);
    }
    return path;
}

// ---------------------------------------------------------------------------
// RRT* with task-space constraints
// ---------------------------------------------------------------------------

namespace detail {

/// Shift the stored cost of a subtree after its root was rewired.
inline void propagate_cost_delta(PlanTree& tree, int node, double delta) {
    std::vector<int> stack = tree.nodes[node].children;
    while (!stack.empty()) {
        const int idx = stack.back();
        stack.pop_back();
        tree.nodes[idx].cost += delta;
        for (int c : tree.nodes[idx].children) stack.push_back(c);
    }
}

}  // namespace detail

/// RRT* over end-effector positions: sample under the branch constraint,
/// steer, gate through the geometric model, choose the cheapest parent in
/// the neighbor ball, insert, rewire. Returns the minimum-cost path whose
/// terminal node lies in the goal region, with orientations attached by
/// SLERP. Deterministic for a fixed seed.
///
/// `prev_path`, when present, activates the replanning penalty on nodes
/// within r' of its way-points. `gate`, when provided, replaces the exact
/// per-query safety gate (typically a BranchSafetyGate raster).
inline PlanResult plan(const WaypointPose& start, const GoalRegion& goal,
                       const BranchConstraint& constraint, const BranchParams& params,
                       const PlannerConfig& config, const PlanPath* prev_path = nullptr,
                       SafetyPredicate gate = {}) {
    config.validate();
    constraint.validate();
    if (!(goal.radius_R > 0.0)) throw ConfigError("radius_R", "must be > 0");
    require_unit(start.orientation);
    require_unit(goal.goal_orientation);

    const auto wall_start = std::chrono::steady_clock::now();
    if (!gate)
        gate = [&constraint, &params](const Vec3& q) {
            return safety_gate(q, constraint, params);
        };

    if (!satisfies_hemisphere(start.position, constraint))
        throw InfeasibleStart("start violates the branch hemisphere constraint");
    // A raster gate can reject a start sitting exactly on the reachable rim
    // (e.g. the rest grasp); the exact gate settles those.
    if (!gate(start.position) && !safety_gate(start.position, constraint, params))
        throw InfeasibleStart("start rejected by the safety gate");

    PlanResult result;
    auto& tree = result.diagnostics.tree;
    tree.nodes.push_back(TreeNode{start.position, -1, 0.0, 0.0, {}});
    tree.root = 0;

    // Degenerate success: already inside the goal region.
    if ((start.position - goal.center).norm() <= goal.radius_R) {
        result.status = PlanStatus::Success;
        result.path.waypoints = {WaypointPose{start.position, start.orientation}};
        result.path.cum_length = {0.0};
        result.path.total_length = 0.0;
        result.path.final_offset = (start.position - goal.center).norm();
        result.path = interpolate_orientations(std::move(result.path),
                                               start.orientation, goal.goal_orientation);
        result.diagnostics.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start)
                .count();
        return result;
    }

    std::mt19937_64 rng(config.rng_seed);
    const double gamma_auto = 1.65 * constraint.height_h;  // volume-bound scale
    const double half_step = 0.5 * config.step_delta_q;

    auto edge_ok = [&](const Vec3& a, const Vec3& b) {
        const double len = (b - a).norm();
        const int interior = static_cast<int>(std::ceil(len / half_step)) - 1;
        for (int i = 1; i <= interior; ++i) {
            const Vec3 p = a + (static_cast<double>(i) / (interior + 1)) * (b - a);
            if (!gate(p)) return false;
        }
        return true;
    };

    std::vector<int> goal_nodes;
    double best_cost = std::numeric_limits<double>::infinity();
    auto& history = result.diagnostics.best_cost_history;
    history.reserve(config.max_iterations_N);

    const int budget_iters =
        config.virtual_seconds_per_iteration > 0.0
            ? static_cast<int>(config.time_budget / config.virtual_seconds_per_iteration)
            : config.max_iterations_N;
    const int iters = std::min(config.max_iterations_N, std::max(budget_iters, 0));

    for (int it = 0; it < iters; ++it) {
        const Vec3 q_rand = sample_constrained(constraint, goal, config, rng);
        if (prev_path != nullptr && !prev_path->waypoints.empty()) {
            double d2 = std::numeric_limits<double>::infinity();
            for (const auto& wp : prev_path->waypoints)
                d2 = std::min(d2, (wp.position - q_rand).squaredNorm());
            if (d2 <= config.penalty_radius_r_prime * config.penalty_radius_r_prime)
                ++result.diagnostics.samples_in_penalty_radius;
        }

        // nearest neighbor (ties resolved to the lowest index)
        int near = 0;
        double near_d2 = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
            const double d2 = (tree.nodes[i].position - q_rand).squaredNorm();
            if (d2 < near_d2) {
                near_d2 = d2;
                near = static_cast<int>(i);
            }
        }
        if (near_d2 == 0.0) {
            history.push_back(best_cost);
            continue;
        }

        const Vec3 q_new = steer(tree.nodes[near].position, q_rand, config.step_delta_q);
        if (!gate(q_new)) {
            ++result.diagnostics.rejected_by_gate;
            history.push_back(best_cost);
            continue;
        }

        const std::size_t n = tree.nodes.size();
        const double shrink =
            gamma_auto * std::cbrt(std::log(static_cast<double>(n) + 1.0) /
                                   (static_cast<double>(n) + 1.0));
        const double radius = config.neighbor_radius > 0.0
                                  ? std::min(config.neighbor_radius, 4.0 * config.step_delta_q)
                                  : std::min(shrink, 4.0 * config.step_delta_q);

        std::vector<int> neighbors;
        for (std::size_t i = 0; i < n; ++i)
            if ((tree.nodes[i].position - q_new).norm() <= radius)
                neighbors.push_back(static_cast<int>(i));

        const double node_penalty = penalty_cost(q_new, prev_path, config);

        // choose-parent: cheapest candidate with a valid edge
        std::vector<std::pair<double, int>> candidates;
        candidates.reserve(neighbors.size() + 1);
        auto add_candidate = [&](int idx) {
            const double c = tree.nodes[idx].cost +
                             (tree.nodes[idx].position - q_new).norm();
            candidates.emplace_back(c, idx);
        };
        for (int idx : neighbors) add_candidate(idx);
        if (std::find(neighbors.begin(), neighbors.end(), near) == neighbors.end())
            add_candidate(near);
        std::sort(candidates.begin(), candidates.end());

        int parent = -1;
        double parent_cost = 0.0;
        for (const auto& [c, idx] : candidates) {
            if (edge_ok(tree.nodes[idx].position, q_new)) {
                parent = idx;
                parent_cost = c;
                break;
            }
        }
        if (parent < 0) {
            history.push_back(best_cost);
            continue;
        }

        const int new_idx = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back(
            TreeNode{q_new, parent, parent_cost + node_penalty, node_penalty, {}});
        tree.nodes[parent].children.push_back(new_idx);
        if (node_penalty > 0.0) ++result.diagnostics.penalty_nodes;

        // rewire neighbors through the new node when that lowers their cost
        for (int idx : neighbors) {
            if (idx == parent) continue;
            auto& nb = tree.nodes[idx];
            const double through =
                tree.nodes[new_idx].cost + (nb.position - q_new).norm() + nb.penalty;
            if (through + 1e-12 < nb.cost &&
                edge_ok(q_new, nb.position)) {
                auto& old_children = tree.nodes[nb.parent].children;
                old_children.erase(
                    std::find(old_children.begin(), old_children.end(), idx));
                nb.parent = new_idx;
                tree.nodes[new_idx].children.push_back(idx);
                const double delta = through - nb.cost;
                nb.cost = through;
                detail::propagate_cost_delta(tree, idx, delta);
            }
        }

        if ((q_new - goal.center).norm() <= goal.radius_R) goal_nodes.push_back(new_idx);

        best_cost = std::numeric_limits<double>::infinity();
        for (int gi : goal_nodes) best_cost = std::min(best_cost, tree.nodes[gi].cost);
        history.push_back(best_cost);
    }

    result.path.iterations_used = static_cast<int>(history.size());
    result.path.planning_time =
        history.size() * config.virtual_seconds_per_iteration;
    result.diagnostics.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start)
            .count();

    if (goal_nodes.empty()) {
        result.status = PlanStatus::Timeout;
        return result;
    }

    int best = goal_nodes.front();
    for (int gi : goal_nodes)
        if (tree.nodes[gi].cost < tree.nodes[best].cost) best = gi;

    std::vector<int> chain;
    for (int idx = best; idx >= 0; idx = tree.nodes[idx].parent) chain.push_back(idx);
    std::reverse(chain.begin(), chain.end());

    // Emit way-points with rewired edges subdivided so consecutive
    // separation never exceeds the steering step.
    auto& path = result.path;
    double acc = 0.0;
    path.waypoints.push_back(WaypointPose{tree.nodes[chain[0]].position, Quat{}});
    path.cum_length.push_back(0.0);
    for (std::size_t i = 1; i < chain.size(); ++i) {
        const Vec3& a = tree.nodes[chain[i - 1]].position;
        const Vec3& b = tree.nodes[chain[i]].position;
        const double len = (b - a).norm();
        const int subs = std::max(1, static_cast<int>(std::ceil(len / config.step_delta_q)));
        for (int k = 1; k <= subs; ++k) {
            const Vec3 p = a + (static_cast<double>(k) / subs) * (b - a);
            acc += (p - path.waypoints.back().position).norm();
            path.waypoints.push_back(WaypointPose{p, Quat{}});
            path.cum_length.push_back(acc);
        }
    }
    path.total_length = acc;
    path.final_offset = (path.waypoints.back().position - goal.center).norm();
    result.path = interpolate_orientations(std::move(path), start.orientation,
                                           goal.goal_orientation);
    result.status = PlanStatus::Success;
    return result;
}

}  // namespace bramble
