#pragma once

#include "bramble/core.hpp"
#include "bramble/planner.hpp"
#include "bramble/sim.hpp"

#include <optional>
#include <random>
#include <string>
#include <vector>

namespace bramble {

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

struct ExecutionConfig {
    double force_threshold = 40.0;     ///< per-axis and magnitude bound [N]
    int max_replans = 50;
    double goal_radius_R = 0.05;       ///< success radius around the goal [m]
    double total_time_budget = 400.0;  ///< cumulative planning seconds
    std::uint64_t rng_seed = 0;
    ServoConfig servo;

    void validate() const {
        if (!(force_threshold > 0.0))
            throw ConfigError("force_threshold", "must be > 0");
        if (max_replans < 0) throw ConfigError("max_replans", "must be >= 0");
        if (!(goal_radius_R > 0.0)) throw ConfigError("goal_radius_R", "must be > 0");
        if (!(total_time_budget > 0.0))
            throw ConfigError("total_time_budget", "must be > 0");
        servo.validate();
    }
};

enum class StepEvent : std::int8_t {
    None = 0,
    ThresholdViolation,
    ReplanStarted,
    GoalReached,
};

inline const char* to_string(StepEvent e) {
    switch (e) {
        case StepEvent::ThresholdViolation: return "threshold_violation";
        case StepEvent::ReplanStarted: return "replan_started";
        case StepEvent::GoalReached: return "goal_reached";
        default: return "none";
    }
}

struct LogStep {
    double time = 0.0;
    WaypointPose pose;
    Vec3 force{0.0, 0.0, 0.0};
    int active_segment = 0;  ///< index of the way-point being approached
    int plan_index = 0;      ///< 0 = initial plan, k = after k-th replan event
    StepEvent event = StepEvent::None;
};

struct ExecutionLog {
    std::vector<LogStep> steps;
};

struct ExecutionOutcome {
    bool success = false;
    double final_offset = std::numeric_limits<double>::infinity();
    int replan_count = 0;
    double executed_path_length = 0.0;
    double peak_force_overall = 0.0;
    double peak_force_final_segment = 0.0;
    double elapsed = 0.0;           ///< planning (virtual) + servo sim seconds
    double planning_seconds = 0.0;  ///< virtual planning seconds alone
    ExecutionLog log;
    std::vector<PlanPath> paths;    ///< initial plan plus every replan
    std::string failure_note;       ///< empty on success

    /// Penalty instrumentation per replan: nodes that received a nonzero
    /// penalty and samples that fell within r' of the violated path.
    struct ReplanStats {
        int penalty_nodes = 0;
        int samples_in_penalty_radius = 0;
    };
    std::vector<ReplanStats> replan_stats;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Abort when any axis component or the magnitude exceeds the threshold
/// (strictly; readings exactly at the bound continue).
inline MonitorDecision monitor(const ForceReading& reading,
                               const ExecutionConfig& config) {
    const double thr = config.force_threshold;
    if (reading.magnitude > thr) return MonitorDecision::Abort;
    for (int i = 0; i < 3; ++i)
        if (std::abs(reading.force[i]) > thr) return MonitorDecision::Abort;
    return MonitorDecision::Continue;
}

/// Uniform draw in the goal ball, resampled (up to 100 attempts) to stay at
/// least radius/4 away from previously tried goals; falls back to the plain
/// uniform draw when the exclusion cannot be met.
inline Vec3 select_new_goal(const GoalRegion& region, const std::vector<Vec3>& tried,
                            std::mt19937_64& rng) {
    if (!(region.radius_R > 0.0)) throw ConfigError("radius_R", "must be > 0");
    Vec3 candidate;
    for (int attempt = 0; attempt < 100; ++attempt) {
        candidate = region.center + detail::uniform_in_ball(rng, region.radius_R);
        bool clear = true;
        for (const auto& g : tried)
            if ((g - candidate).norm() < region.radius_R / 4.0) {
                clear = false;
                break;
            }
        if (clear) return candidate;
    }
    return candidate;
}

/// Plan, follow way-points through the simulator, abort on force-threshold
/// violations, and replan from the abort state toward a fresh goal point with
/// the divergence penalty active against the violated path. Terminates on
/// success, the replan cap, or the planning-time budget.
inline ExecutionOutcome execute(const WaypointPose& start, const GoalRegion& region,
                                const SimBranch& branch,
                                const BranchConstraint& constraint,
                                const PlannerConfig& planner_cfg,
                                const ExecutionConfig& exec_cfg,
                                SafetyPredicate gate = {}) {
    branch.validate();
    constraint.validate();
    exec_cfg.validate();
    planner_cfg.validate();

    ExecutionOutcome out;
    std::mt19937_64 goal_rng(exec_cfg.rng_seed);
    std::mt19937_64 sim_rng(branch.rng_seed);
    ForceWarmStart warm;
    EndEffectorState state{start, 0.0};

    // Way-point acceptance shrinks by the servo tolerance so a completed
    // path always lands inside the success radius.
    const double margin = 2.0 * exec_cfg.servo.position_tol;
    const double r_eff = std::max(region.radius_R - margin, 0.5 * region.radius_R);

    const ForceMonitor mon = [&exec_cfg](const ForceReading& r) {
        return monitor(r, exec_cfg);
    };

    auto run_plan = [&](const WaypointPose& from, const GoalRegion& target,
                        const PlanPath* prev,
                        std::uint64_t seed) -> std::optional<PlanResult> {
        const double remaining = exec_cfg.total_time_budget - out.planning_seconds;
        if (remaining <= 0.0) return std::nullopt;
        PlannerConfig pc = planner_cfg;
        pc.rng_seed = seed;
        pc.time_budget = std::min(planner_cfg.time_budget, remaining);
        try {
            PlanResult r = plan(from, target, constraint, branch.params, pc, prev, gate);
            out.planning_seconds += r.path.planning_time;
            return r;
        } catch (const InfeasibleStart&) {
            return std::nullopt;
        }
    };

    auto log_segment = [&](const SegmentResult& seg, int seg_idx, int plan_idx) {
        for (std::size_t i = 0; i < seg.readings.size(); ++i) {
            const Vec3 prev_pos = out.log.steps.empty() && i == 0
                                      ? start.position
                                      : (i == 0 ? out.log.steps.back().pose.position
                                                : seg.poses[i - 1].position);
            out.executed_path_length += (seg.poses[i].position - prev_pos).norm();
            LogStep step;
            step.time = seg.readings[i].time;
            step.pose = seg.poses[i];
            step.force = seg.readings[i].force;
            step.active_segment = seg_idx;
            step.plan_index = plan_idx;
            if (seg.status == SegmentStatus::Aborted && i + 1 == seg.readings.size())
                step.event = StepEvent::ThresholdViolation;
            out.log.steps.push_back(step);
            out.peak_force_overall =
                std::max(out.peak_force_overall, seg.readings[i].magnitude);
        }
    };

    auto push_event = [&](StepEvent e, int seg_idx, int plan_idx) {
        LogStep step;
        step.time = state.time;
        step.pose = state.pose;
        step.force = out.log.steps.empty() ? Vec3::Zero() : out.log.steps.back().force;
        step.active_segment = seg_idx;
        step.plan_index = plan_idx;
        step.event = e;
        out.log.steps.push_back(step);
    };

    int plan_idx = 0;
    auto finalize = [&]() -> ExecutionOutcome& {
        out.final_offset = (state.pose.position - region.center).norm();
        out.success = out.final_offset <= exec_cfg.goal_radius_R;
        out.elapsed = out.planning_seconds + state.time;
        out.peak_force_final_segment = 0.0;
        for (const auto& s : out.log.steps)
            if (s.plan_index == plan_idx && s.event == StepEvent::None)
                out.peak_force_final_segment =
                    std::max(out.peak_force_final_segment, s.force.norm());
        return out;
    };
    auto fail = [&](const std::string& note) {
        out.failure_note = note;
        return finalize();
    };

    GoalRegion first_region = region;
    first_region.radius_R = r_eff;
    auto planned = run_plan(start, first_region, nullptr, planner_cfg.rng_seed);
    if (!planned || planned->status != PlanStatus::Success)
        return fail(planned ? "initial plan timed out" : "initial plan infeasible");

    out.paths.push_back(planned->path);
    std::vector<Vec3> tried_goals;
    PlanPath violated;  // the path whose execution tripped the monitor

    while (true) {
        const PlanPath& current = out.paths.back();
        bool aborted = false;
        for (std::size_t seg = 1; seg < current.waypoints.size(); ++seg) {
            SegmentResult res = run_segment(branch, state, current.waypoints[seg],
                                            exec_cfg.servo, mon, sim_rng, &warm);
            state = res.state;
            log_segment(res, static_cast<int>(seg), plan_idx);
            if (res.status == SegmentStatus::Aborted) {
                aborted = true;
                break;
            }
            if (res.status == SegmentStatus::StepLimit)
                return fail("servo step limit hit");
        }

        if (!aborted) {
            if ((state.pose.position - region.center).norm() <= exec_cfg.goal_radius_R) {
                push_event(StepEvent::GoalReached, 0, plan_idx);
                return finalize();
            }
            return fail("path completed outside the goal radius");
        }

        // Threshold violation: replan from this state toward a fresh goal.
        violated = current;
        bool replanned = false;
        while (out.replan_count < exec_cfg.max_replans) {
            ++out.replan_count;
            GoalRegion sample_region = region;
            sample_region.radius_R = 0.75 * r_eff;
            const Vec3 new_goal = select_new_goal(sample_region, tried_goals, goal_rng);
            tried_goals.push_back(new_goal);
            GoalRegion replan_region{new_goal, 0.25 * r_eff, region.goal_orientation};
            push_event(StepEvent::ReplanStarted, 0, plan_idx);
            auto next = run_plan(state.pose, replan_region, &violated,
                                 derive_seed(planner_cfg.rng_seed,
                                             static_cast<std::uint64_t>(out.replan_count)));
            if (!next) return fail("planning budget exhausted during replanning");
            out.replan_stats.push_back(
                {next->diagnostics.penalty_nodes,
                 next->diagnostics.samples_in_penalty_radius});
            if (next->status == PlanStatus::Success) {
                out.paths.push_back(next->path);
                ++plan_idx;
                replanned = true;
                break;
            }
        }
        if (!replanned)
            return fail("replan cap reached without a feasible path");
    }
}

}  // namespace bramble
