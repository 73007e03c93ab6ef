// Minimal force-aware replanning loop: one branch, one snag, one goal.
// Prints the per-step force magnitude and each replanning event.

#include "bramble/bramble.hpp"

#include <cstdio>

using namespace bramble;

int main() {
    SimBranch branch;
    branch.frame = PlaneFrame::vertical(Vec3(0, 0, 0), 0.0);
    branch.noise_sigma = 0.25;
    branch.rng_seed = 7;
    // A snag the geometric model cannot see, sitting on the nominal corridor.
    branch.anomalies.push_back(
        AnomalyRegion{Vec3(0.15, 0.0, 0.52), 0.1, 3.0});

    BranchConstraint constraint{Vec3(0, 0, 0), branch.params.length_L, branch.frame};
    const WaypointPose start = branch.rest_grasp();
    const GoalRegion goal{Vec3(0.3, 0.0, 0.45), 0.05,
                          Quat::from_axis_angle(Vec3(0, 0, 1), kPi / 4)};

    std::printf("building safety gate...\n");
    BranchSafetyGate gate(branch.params, constraint);

    PlannerConfig pcfg;
    pcfg.max_iterations_N = 2500;
    pcfg.rng_seed = 3;
    ExecutionConfig ecfg;
    ecfg.rng_seed = 5;

    const ExecutionOutcome out =
        execute(start, goal, branch, constraint, pcfg, ecfg, gate.predicate());

    for (const auto& s : out.log.steps) {
        if (s.event == StepEvent::None)
            std::printf("t=%6.2f  |F|=%6.2f N  segment %d (plan %d)\n", s.time,
                        s.force.norm(), s.active_segment, s.plan_index);
        else
            std::printf("t=%6.2f  == %s ==\n", s.time, to_string(s.event));
    }
    std::printf("\nsuccess=%d final_offset=%.3f m replans=%d peak=%.1f N "
                "final_segment_peak=%.1f N\n",
                out.success, out.final_offset, out.replan_count,
                out.peak_force_overall, out.peak_force_final_segment);
    return out.success ? 0 : 1;
}
