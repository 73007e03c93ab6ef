#pragma once

#include "bramble/core.hpp"
#include "bramble/dlo_model.hpp"

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <variant>
#include <vector>

namespace bramble {

enum class SafetyLabel : std::int8_t { Safe = 0, Caution = 1, Risky = 2 };

enum class RiskReason : std::int8_t {
    None = 0,
    Unreachable,   ///< target outside the closed reachable disk
    SolveFailed,   ///< shape optimization did not converge in budget
    Looped,        ///< solved configuration loops back on itself
};

inline const char* to_string(SafetyLabel label) {
    switch (label) {
        case SafetyLabel::Safe: return "safe";
        case SafetyLabel::Caution: return "caution";
        default: return "risky";
    }
}

inline std::optional<SafetyLabel> safety_label_from_string(const std::string& s) {
    if (s == "safe") return SafetyLabel::Safe;
    if (s == "caution") return SafetyLabel::Caution;
    if (s == "risky") return SafetyLabel::Risky;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

struct ClassifyOptions {
    ClassifyOptions() {
        solve.time_budget = 0.2;
        solve.max_inner = 150;  // classification budget; failures stay cheap
    }
    SolveSettings solve;              ///< per-classification solve budget
    double caution_tolerance = -1.0;  ///< default 1e-3 * L

    double caution_tol_for(const BranchParams& p) const {
        return caution_tolerance >= 0.0 ? caution_tolerance : 1e-3 * p.length_L;
    }
};

struct Classified {
    SafetyLabel label = SafetyLabel::Risky;
    RiskReason reason = RiskReason::None;
    ShapeSolution shape;  // meaningful unless reason == Unreachable
};

/// Transversal crossing test for two segments ab and cd. Orientations within
/// `eps` of zero are treated as degenerate (no crossing), which keeps
/// straight shapes with floating-point jitter from reading as self-crossing.
inline bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c,
                               const Vec2& d, double eps = 0.0) {
    auto orient = [eps](const Vec2& p, const Vec2& q, const Vec2& r) {
        const double v = (q.x() - p.x()) * (r.y() - p.y()) -
                         (q.y() - p.y()) * (r.x() - p.x());
        if (v > eps) return 1;
        if (v < -eps) return -1;
        return 0;
    };
    const int o1 = orient(a, b, c), o2 = orient(a, b, d);
    const int o3 = orient(c, d, a), o4 = orient(c, d, b);
    return o1 * o2 < 0 && o3 * o4 < 0;
}

/// Looping test: the tangent angle swings more than pi away from the base
/// angle, or the discretized polyline self-intersects.
inline bool shape_loops(const ShapeSolution& sol) {
    const double th0 = sol.theta[0];
    for (int j = 0; j < sol.theta.size(); ++j)
        if (std::abs(sol.theta[j] - th0) > kPi) return true;
    const auto& pts = sol.positions;
    const int n = static_cast<int>(pts.size()) - 1;  // segments
    const double h = sol.s_grid.size() > 1 ? sol.s_grid[1] - sol.s_grid[0] : 0.0;
    const double eps = 1e-9 * h * h;
    for (int i = 0; i + 2 < n; ++i)
        for (int j = i + 2; j < n; ++j)
            if (segments_intersect(pts[i], pts[i + 1], pts[j], pts[j + 1], eps))
                return true;
    return false;
}

/// Safety classification of a single endpoint target (tip angle free).
/// Every failure mode maps to Risky.
inline Classified classify_endpoint_detailed(const BranchParams& params,
                                             const EndpointTarget& target,
                                             const ClassifyOptions& options = {}) {
    Classified out;
    const double reach = params.length_L * (1.0 + options.solve.reachability_slack);
    if (std::hypot(target.x, target.z) > reach) {
        out.label = SafetyLabel::Risky;
        out.reason = RiskReason::Unreachable;
        return out;
    }
    out.shape = solve_shape(params, target, options.solve);
    if (!out.shape.converged) {
        out.label = SafetyLabel::Risky;
        out.reason = RiskReason::SolveFailed;
        return out;
    }
    if (shape_loops(out.shape)) {
        out.label = SafetyLabel::Risky;
        out.reason = RiskReason::Looped;
        return out;
    }
    const double z_tip = out.shape.positions.back().y();
    const double tol = options.caution_tol_for(params);
    for (const Vec2& p : out.shape.positions)
        if (p.y() > z_tip + tol) {
            out.label = SafetyLabel::Caution;
            return out;
        }
    out.label = SafetyLabel::Safe;
    return out;
}

inline SafetyLabel classify_endpoint(const BranchParams& params,
                                     const EndpointTarget& target,
                                     const ClassifyOptions& options = {}) {
    return classify_endpoint_detailed(params, target, options).label;
}

// ---------------------------------------------------------------------------
// Maps
// ---------------------------------------------------------------------------

struct SafetySample {
    double x = 0.0;
    double z = 0.0;
    SafetyLabel label = SafetyLabel::Risky;
};

/// Random-endpoint protocol: `count` draws uniform over the disk of radius
/// margin * L around the base.
struct RandomMode {
    int count = 200;
    std::uint64_t seed = 0;
    double margin = 1.1;
};

/// Raster over [x_min, x_max] x [z_min, z_max] classified at cell centers.
struct GridMode {
    double x_min, x_max, z_min, z_max;
    double resolution;
};

using MapMode = std::variant<RandomMode, GridMode>;

struct SafetyMap {
    PlaneFrame plane_frame;            ///< world placement of the X-Z plane
    std::vector<SafetySample> samples;

    // raster (grid mode only)
    bool has_grid = false;
    double x_min = 0.0, z_min = 0.0, resolution = 0.0;
    int nx = 0, nz = 0;
    std::vector<std::int8_t> cells;    ///< -1 unknown, else SafetyLabel

    double query_radius = 0.0;         ///< nearest-sample fallback distance

    std::optional<SafetyLabel> cell_label(int ix, int iz) const {
        if (!has_grid || ix < 0 || ix >= nx || iz < 0 || iz >= nz) return std::nullopt;
        const std::int8_t v = cells[static_cast<std::size_t>(iz) * nx + ix];
        if (v < 0) return std::nullopt;
        return static_cast<SafetyLabel>(v);
    }

    /// Label of the containing grid cell, else the nearest sample within
    /// query_radius, else nullopt (Unknown).
    std::optional<SafetyLabel> query(double x, double z) const {
        if (has_grid) {
            const int ix = static_cast<int>(std::floor((x - x_min) / resolution));
            const int iz = static_cast<int>(std::floor((z - z_min) / resolution));
            if (auto l = cell_label(ix, iz)) return l;
            if (ix >= 0 && ix < nx && iz >= 0 && iz < nz) return std::nullopt;
        }
        double best = query_radius * query_radius;
        std::optional<SafetyLabel> out;
        for (const auto& s : samples) {
            const double d2 = (s.x - x) * (s.x - x) + (s.z - z) * (s.z - z);
            if (d2 <= best) {
                best = d2;
                out = s.label;
            }
        }
        return out;
    }
};

namespace detail {

/// Greedy nearest-neighbor visiting order so that consecutive solves are
/// close and can share warm starts. Starts at the point nearest the rest
/// endpoint (0, L).
inline std::vector<int> warm_visit_order(const std::vector<Vec2>& pts, double rest_z) {
    const int n = static_cast<int>(pts.size());
    std::vector<int> order;
    order.reserve(n);
    std::vector<bool> used(n, false);
    Vec2 cur(0.0, rest_z);
    for (int step = 0; step < n; ++step) {
        int best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i) {
            if (used[i]) continue;
            const double d = (pts[i] - cur).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        used[best] = true;
        order.push_back(best);
        cur = pts[best];
    }
    return order;
}

inline std::vector<SafetyLabel> classify_batch(const BranchParams& params,
                                               const std::vector<Vec2>& pts,
                                               const ClassifyOptions& options) {
    const std::vector<int> order = warm_visit_order(pts, params.length_L);
    std::vector<SafetyLabel> labels(pts.size(), SafetyLabel::Risky);
    ClassifyOptions warm = options;
    for (int idx : order) {
        const EndpointTarget target{pts[idx].x(), pts[idx].y(), std::nullopt};
        Classified c = classify_endpoint_detailed(params, target, warm);
        if (c.label == SafetyLabel::Risky && c.reason != RiskReason::Unreachable &&
            warm.solve.init) {
            // A stale warm start can drag the solve into a looped or
            // infeasible basin; confirm Risky from the cold heuristic init.
            c = classify_endpoint_detailed(params, target, options);
        }
        labels[idx] = c.label;
        if (c.shape.converged && c.label != SafetyLabel::Risky) {
            warm.solve.init = c.shape.coefficients;
            warm.solve.init_multipliers = c.shape.multipliers;
        }
    }
    return labels;
}

}  // namespace detail

/// Classify sampled endpoints into a queryable map. Deterministic for a
/// fixed mode/seed.
inline SafetyMap build_safety_map(const BranchParams& params, const MapMode& mode,
                                  const ClassifyOptions& options = {},
                                  const PlaneFrame& plane = {}) {
    params.validate();
    SafetyMap map;
    map.plane_frame = plane;

    if (const auto* rnd = std::get_if<RandomMode>(&mode)) {
        if (rnd->count < 1) throw ConfigError("count", "must be >= 1");
        std::mt19937_64 rng(rnd->seed);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::vector<Vec2> pts;
        pts.reserve(rnd->count);
        const double radius = rnd->margin * params.length_L;
        for (int i = 0; i < rnd->count; ++i) {
            const double r = radius * std::sqrt(unit(rng));
            const double phi = 2.0 * kPi * unit(rng);
            pts.emplace_back(r * std::cos(phi), r * std::sin(phi));
        }
        const auto labels = detail::classify_batch(params, pts, options);
        map.samples.resize(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i)
            map.samples[i] = {pts[i].x(), pts[i].y(), labels[i]};
        map.query_radius = params.length_L / 20.0;
        return map;
    }

    const auto& grid = std::get<GridMode>(mode);
    if (!(grid.resolution > 0.0)) throw ConfigError("resolution", "must be > 0");
    if (!(grid.x_max > grid.x_min) || !(grid.z_max > grid.z_min))
        throw ConfigError("grid_bounds", "max must exceed min");
    map.has_grid = true;
    map.x_min = grid.x_min;
    map.z_min = grid.z_min;
    map.resolution = grid.resolution;
    map.nx = static_cast<int>(std::ceil((grid.x_max - grid.x_min) / grid.resolution));
    map.nz = static_cast<int>(std::ceil((grid.z_max - grid.z_min) / grid.resolution));
    map.cells.assign(static_cast<std::size_t>(map.nx) * map.nz, -1);
    map.query_radius = grid.resolution;

    // Each cell is represented by its center pulled radially to just inside
    // the physical disk, so rim cells carry the label of their nearest
    // attainable configuration instead of a blanket Risky.
    const double clamp_r = params.length_L * (1.0 - 1e-3);
    std::vector<Vec2> pts;
    pts.reserve(map.cells.size());
    for (int iz = 0; iz < map.nz; ++iz)
        for (int ix = 0; ix < map.nx; ++ix) {
            Vec2 p(map.x_min + (ix + 0.5) * map.resolution,
                   map.z_min + (iz + 0.5) * map.resolution);
            const double r = p.norm();
            if (r > clamp_r) p *= clamp_r / r;
            pts.push_back(p);
        }
    const auto labels = detail::classify_batch(params, pts, options);
    map.samples.resize(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        map.samples[i] = {pts[i].x(), pts[i].y(), labels[i]};
        map.cells[i] = static_cast<std::int8_t>(labels[i]);
    }
    return map;
}

}  // namespace bramble
