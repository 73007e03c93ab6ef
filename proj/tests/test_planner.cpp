#include "bramble/planner.hpp"

#include "support/scenarios.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace bramble;
using Catch::Approx;
using testsupport::shared_gate;
using testsupport::test_constraint;
using testsupport::test_goal;

namespace {

PlannerConfig quick_config(std::uint64_t seed, int iters = 1500) {
    PlannerConfig cfg;
    cfg.max_iterations_N = iters;
    cfg.rng_seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("constrained sampling stays in the upper half-ball") {
    const BranchConstraint c{Vec3(0.7, 0.0, 0.0), 0.6, PlaneFrame::vertical(Vec3(0.7, 0, 0), 0.0)};
    const GoalRegion goal{Vec3(0.7, 0.0, 0.5), 0.05, Quat{}};
    PlannerConfig cfg;
    std::mt19937_64 rng(123);
    for (int i = 0; i < 10000; ++i) {
        const Vec3 q = sample_constrained(c, goal, cfg, rng);
        CHECK((q - c.base_point).norm() <= c.height_h + 1e-12);
        CHECK(q.z() >= c.base_point.z());
        // (1.5, 0, 0.2) sits 0.8 m from the base, beyond h: every sample
        // keeps at least 0.8 - h away from it
        CHECK((q - Vec3(1.5, 0.0, 0.2)).norm() >= 0.2 - 1e-12);
    }
}

TEST_CASE("sample mean approaches the half-ball centroid") {
    const BranchConstraint c{Vec3(0, 0, 0), 0.6, PlaneFrame::vertical(Vec3(0, 0, 0), 0.0)};
    const GoalRegion goal{Vec3(0, 0, 0.5), 0.05, Quat{}};
    PlannerConfig cfg;
    cfg.goal_bias = 0.0;
    std::mt19937_64 rng(2718);
    Vec3 mean = Vec3::Zero();
    const int n = 100000;
    for (int i = 0; i < n; ++i) mean += sample_constrained(c, goal, cfg, rng);
    mean /= n;
    // centroid of a solid hemisphere sits 3h/8 above the flat face
    CHECK(std::abs(mean.x()) < 0.01 * c.height_h);
    CHECK(std::abs(mean.y()) < 0.01 * c.height_h);
    CHECK(mean.z() == Approx(3.0 * c.height_h / 8.0).epsilon(0.01));
}

TEST_CASE("steer clamps to the step size") {
    CHECK(steer(Vec3(0, 0, 0), Vec3(1, 0, 0), 0.1) == Vec3(0.1, 0, 0));
    CHECK(steer(Vec3(0, 0, 0), Vec3(0.05, 0, 0), 0.1) == Vec3(0.05, 0, 0));
    CHECK((steer(Vec3(0, 0, 0), Vec3(3, 4, 0), 1.0) - Vec3(0.6, 0.8, 0)).norm() <
          1e-15);
    CHECK_THROWS_AS(steer(Vec3(1, 1, 1), Vec3(1, 1, 1), 0.1), ZeroDirection);
}

TEST_CASE("penalty cost follows the inverse-distance rule") {
    PlannerConfig cfg;
    cfg.penalty_epsilon = 1e-3;
    cfg.penalty_weight = 1.0;
    cfg.penalty_radius_r_prime = 0.3;
    CHECK(penalty_cost(Vec3(0, 0, 0), nullptr, cfg) == 0.0);
    PlanPath prev;
    prev.waypoints = {WaypointPose{Vec3(0, 0, 0), Quat{}},
                      WaypointPose{Vec3(1, 0, 0), Quat{}}};
    CHECK(penalty_cost(Vec3(0, 0, 0), &prev, cfg) == Approx(1000.0));
    // min distance is to the way-point set: hypot(0.1, 0.1) from the origin
    CHECK(penalty_cost(Vec3(0.1, 0.1, 0), &prev, cfg) ==
          Approx(1.0 / (std::hypot(0.1, 0.1) + 1e-3)));
    CHECK(penalty_cost(Vec3(0.5, 0.5, 0), &prev, cfg) == 0.0);  // outside r'
}

TEST_CASE("safety gate accepts the rest grasp and rejects unreachable points") {
    const auto branch = testsupport::test_branch();
    const auto constraint = test_constraint();
    CHECK(safety_gate(branch.rest_grasp().position, constraint, branch.params));
    CHECK_FALSE(safety_gate(Vec3(0.9, 0.0, 0.3), constraint, branch.params));
    // a known caution endpoint projects to a rejected sample
    const Vec3 caution = constraint.plane_frame.from_plane(0.5 * 0.6, 0.2 * 0.6);
    CHECK_FALSE(safety_gate(caution, constraint, branch.params));
}

TEST_CASE("slerp interpolation") {
    const Quat id = Quat::identity();
    const Quat z90 = Quat::from_axis_angle(Vec3(0, 0, 1), kPi / 2);
    SECTION("endpoints are exact") {
        CHECK(rotation_angle_between(slerp(id, z90, 0.0), id) < 1e-12);
        CHECK(rotation_angle_between(slerp(id, z90, 1.0), z90) < 1e-12);
    }
    SECTION("midpoint is the half rotation") {
        const Quat mid = slerp(id, z90, 0.5);
        const Quat z45 = Quat::from_axis_angle(Vec3(0, 0, 1), kPi / 4);
        CHECK(rotation_angle_between(mid, z45) < 1e-12);
    }
    SECTION("antipodal inputs take the short way") {
        const Quat neg = -z90;  // same rotation, flipped sign
        const Quat mid = slerp(id, neg, 0.5);
        CHECK(rotation_angle_between(id, mid) == Approx(kPi / 4).margin(1e-9));
    }
    SECTION("near-identical inputs fall back to nlerp smoothly") {
        const Quat close = Quat::from_axis_angle(Vec3(0, 0, 1), 1e-8);
        const Quat mid = slerp(id, close, 0.5);
        CHECK(std::abs(mid.norm() - 1.0) < 1e-12);
    }
    SECTION("non-unit input throws") {
        PlanPath path;
        path.waypoints = {WaypointPose{Vec3(0, 0, 0), Quat{}}};
        path.cum_length = {0.0};
        CHECK_THROWS_AS(
            interpolate_orientations(path, Quat{2, 0, 0, 0}, Quat::identity()),
            NonUnitQuaternion);
    }
}

TEST_CASE("orientation is distributed along arc length") {
    PlanPath path;
    const int n = 11;
    for (int i = 0; i < n; ++i) {
        path.waypoints.push_back(WaypointPose{Vec3(0.05 * i, 0, 0), Quat{}});
        path.cum_length.push_back(0.05 * i);
    }
    path.total_length = path.cum_length.back();
    const Quat q0 = Quat::identity();
    const Quat q1 = Quat::from_axis_angle(Vec3(1, 1, 0), 1.2);
    const PlanPath out = interpolate_orientations(path, q0, q1);

    CHECK(rotation_angle_between(out.waypoints.front().orientation, q0) < 1e-12);
    CHECK(rotation_angle_between(out.waypoints.back().orientation, q1) < 1e-12);
    // equal arc steps -> equal rotation increments
    const double first = rotation_angle_between(out.waypoints[0].orientation,
                                                out.waypoints[1].orientation);
    for (std::size_t i = 1; i + 1 < out.waypoints.size(); ++i) {
        const double inc = rotation_angle_between(out.waypoints[i].orientation,
                                                  out.waypoints[i + 1].orientation);
        CHECK(std::abs(inc - first) < 1e-9);
        CHECK(std::abs(out.waypoints[i].orientation.norm() - 1.0) < 1e-9);
    }
}

TEST_CASE("plan returns a degenerate path when already at the goal") {
    const auto branch = testsupport::test_branch();
    const auto constraint = test_constraint();
    const WaypointPose start = branch.rest_grasp();
    const GoalRegion goal{start.position + Vec3(0.01, 0, 0), 0.05, Quat{}};
    const auto res = plan(start, goal, constraint, branch.params, quick_config(1),
                          nullptr, shared_gate().predicate());
    REQUIRE(res.status == PlanStatus::Success);
    CHECK(res.path.waypoints.size() == 1);
    CHECK(res.path.total_length == 0.0);
}

TEST_CASE("plan throws on infeasible starts") {
    const auto branch = testsupport::test_branch();
    const auto constraint = test_constraint();
    const GoalRegion goal = test_goal();
    WaypointPose outside{Vec3(1.5, 0, 0.2), Quat{}};
    CHECK_THROWS_AS(plan(outside, goal, constraint, branch.params, quick_config(1),
                         nullptr, shared_gate().predicate()),
                    InfeasibleStart);
}

TEST_CASE("planned paths respect every constraint and invariant") {
    const auto branch = testsupport::test_branch();
    const auto constraint = test_constraint();
    const GoalRegion goal = test_goal();
    const WaypointPose start = branch.rest_grasp();

    const auto res = plan(start, goal, constraint, branch.params, quick_config(77, 2500),
                          nullptr, shared_gate().predicate());
    REQUIRE(res.status == PlanStatus::Success);
    const auto& path = res.path;

    SECTION("waypoints satisfy the hemisphere constraint and the gate") {
        for (std::size_t i = 0; i < path.waypoints.size(); ++i) {
            CHECK(satisfies_hemisphere(path.waypoints[i].position, constraint));
            if (i > 0)  // start may sit on the raster rim; nodes must be gated
                CHECK(shared_gate().is_safe(path.waypoints[i].position));
        }
    }
    SECTION("consecutive separation never exceeds the step") {
        for (std::size_t i = 1; i < path.waypoints.size(); ++i) {
            const double d =
                (path.waypoints[i].position - path.waypoints[i - 1].position).norm();
            CHECK(d <= 0.05 * (1.0 + 1e-6));
        }
    }
    SECTION("terminal lies in the goal region; length bounds hold") {
        CHECK(path.final_offset <= goal.radius_R);
        CHECK(path.total_length >=
              (start.position - goal.center).norm() - goal.radius_R);
    }
    SECTION("tree costs are consistent after rewiring") {
        const auto& tree = res.diagnostics.tree;
        for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
            double acc = 0.0;
            for (int j = static_cast<int>(i); tree.nodes[j].parent >= 0;
                 j = tree.nodes[j].parent)
                acc += (tree.nodes[j].position -
                        tree.nodes[tree.nodes[j].parent].position)
                           .norm() +
                       tree.nodes[j].penalty;
            CHECK(std::abs(acc - tree.nodes[i].cost) < 1e-9);
        }
    }
    SECTION("anytime property: best goal cost never increases") {
        const auto& h = res.diagnostics.best_cost_history;
        REQUIRE_FALSE(h.empty());
        for (std::size_t i = 1; i < h.size(); ++i) CHECK(h[i] <= h[i - 1] + 1e-12);
    }
    SECTION("orientation continuity scales with arc length") {
        const double gamma = std::acos(std::min(
            1.0, std::abs(dot(start.orientation, goal.goal_orientation))));
        const double bound = (kPi * 0.05 / path.total_length + 1e-6) * gamma + 1e-12;
        for (std::size_t i = 1; i < path.waypoints.size(); ++i)
            CHECK(rotation_angle_between(path.waypoints[i - 1].orientation,
                                         path.waypoints[i].orientation) <= bound);
    }
}

TEST_CASE("planning is deterministic for a fixed seed") {
    const auto branch = testsupport::test_branch();
    const auto constraint = test_constraint();
    const GoalRegion goal = test_goal();
    const WaypointPose start = branch.rest_grasp();
    const auto a = plan(start, goal, constraint, branch.params, quick_config(5),
                        nullptr, shared_gate().predicate());
    const auto b = plan(start, goal, constraint, branch.params, quick_config(5),
                        nullptr, shared_gate().predicate());
    REQUIRE(a.path.waypoints.size() == b.path.waypoints.size());
    for (std::size_t i = 0; i < a.path.waypoints.size(); ++i)
        CHECK(a.path.waypoints[i].position == b.path.waypoints[i].position);
    const auto c = plan(start, goal, constraint, branch.params, quick_config(6),
                        nullptr, shared_gate().predicate());
    const bool same_size = c.path.waypoints.size() == a.path.waypoints.size();
    bool identical = same_size;
    if (same_size)
        for (std::size_t i = 0; i < a.path.waypoints.size(); ++i)
            identical = identical &&
                        a.path.waypoints[i].position == c.path.waypoints[i].position;
    CHECK_FALSE(identical);  // different seed explores differently
}

TEST_CASE("virtual time budget caps iterations deterministically") {
    const auto branch = testsupport::test_branch();
    const auto constraint = test_constraint();
    const GoalRegion goal = test_goal();
    PlannerConfig cfg = quick_config(3, 100000);
    cfg.time_budget = 1.0;  // 1 s at 0.004 s / iteration = 250 iterations
    const auto res = plan(branch.rest_grasp(), goal, constraint, branch.params, cfg,
                          nullptr, shared_gate().predicate());
    CHECK(res.path.iterations_used == 250);
    CHECK(res.path.planning_time == Approx(1.0));
}

TEST_CASE("replanning penalty pushes the new path away from the old one") {
    const auto branch = testsupport::test_branch();
    const auto constraint = test_constraint();
    const GoalRegion goal = test_goal();
    const WaypointPose start = branch.rest_grasp();

    const auto nominal = plan(start, goal, constraint, branch.params,
                              quick_config(21, 2000), nullptr, shared_gate().predicate());
    REQUIRE(nominal.status == PlanStatus::Success);

    auto mean_min_dist = [&](const PlanPath& p) {
        double acc = 0.0;
        for (const auto& wp : p.waypoints) {
            double d = std::numeric_limits<double>::infinity();
            for (const auto& q : nominal.path.waypoints)
                d = std::min(d, (wp.position - q.position).norm());
            acc += d;
        }
        return acc / static_cast<double>(p.waypoints.size());
    };

    int wins = 0;
    const int pairs = 6;
    for (int s = 0; s < pairs; ++s) {
        PlannerConfig with = quick_config(100 + s, 2000);
        PlannerConfig without = with;
        without.penalty_weight = 0.0;
        const auto rep_on = plan(start, goal, constraint, branch.params, with,
                                 &nominal.path, shared_gate().predicate());
        const auto rep_off = plan(start, goal, constraint, branch.params, without,
                                  &nominal.path, shared_gate().predicate());
        REQUIRE(rep_on.status == PlanStatus::Success);
        REQUIRE(rep_off.status == PlanStatus::Success);
        CHECK(rep_on.diagnostics.penalty_nodes > 0);
        if (mean_min_dist(rep_on.path) >= mean_min_dist(rep_off.path)) ++wins;
    }
    CHECK(wins >= (pairs * 4) / 5);
}
