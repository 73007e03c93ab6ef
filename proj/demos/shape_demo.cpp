// Solve a handful of branch shapes and print the curves as gnuplot-friendly
// columns. Run without arguments.

#include "bramble/dlo_model.hpp"
#include "bramble/safety_map.hpp"

#include <cstdio>

using namespace bramble;

int main() {
    BranchParams params;  // 0.6 m branch, EI = 0.5 N m^2

    const EndpointTarget targets[] = {
        {0.0, params.length_L, std::nullopt},           // rest
        {0.25, 0.5, std::nullopt},                      // gentle bend
        {0.35, 0.35, std::nullopt},                     // strong bend
        {0.2, 0.45, kPi / 4},                           // tip angle pinned
    };

    for (const auto& t : targets) {
        const ShapeSolution sol = solve_shape(params, t);
        const SafetyLabel label =
            classify_endpoint(params, EndpointTarget{t.x, t.z, std::nullopt});
        std::printf("# target (%.2f, %.2f)%s energy=%.4f J converged=%d label=%s\n",
                    t.x, t.z, t.tip_angle ? " +tip" : "", sol.energy, sol.converged,
                    to_string(label));
        for (int j = 0; j < sol.s_grid.size(); j += 10)
            std::printf("%8.4f %8.4f %8.4f\n", sol.s_grid[j], sol.positions[j].x(),
                        sol.positions[j].y());
        std::printf("\n");
    }
    return 0;
}
