// bramble: plan and simulate safe manipulation of a flexible branch.
//
// Subcommands: solve-shape, safety-map, plan, simulate, experiment, report.
// Exit codes: 0 ok, 1 config/I-O error, 2 solver failure, 3 infeasible
// input, 4 experiment finished with at least one failed trial.

#include "bramble/bramble.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace bramble;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitSolveFailed = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitFailedTrials = 4;

struct GlobalOpts {
    std::string config_path;
    std::string out = ".";
    std::optional<std::uint64_t> seed;
    int jobs = 1;
    bool verbose = false;
};

ScenarioConfig load_config(const GlobalOpts& g) {
    if (g.config_path.empty()) throw ConfigError("config", "--config is required");
    ScenarioConfig cfg = load_scenario_file(g.config_path);
    if (g.seed) cfg.base_seed = *g.seed;
    return cfg;
}

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("out", "cannot create directory " + dir);
}

BranchSafetyGate build_gate(const ScenarioConfig& cfg, bool verbose) {
    if (verbose) std::cerr << "building safety gate raster...\n";
    return BranchSafetyGate(cfg.branch.params, cfg.constraint, cfg.gate_cell);
}

int cmd_solve_shape(const GlobalOpts& g, double x, double z,
                    std::optional<double> tip, const std::string& out_file) {
    const ScenarioConfig cfg = load_config(g);
    EndpointTarget target{x, z, tip};
    const ShapeSolution sol = solve_shape(cfg.branch.params, target);
    if (sol.status == SolveStatus::Unreachable) {
        std::cerr << "target is unreachable (|target| > L)\n";
        return kExitInfeasible;
    }
    csv::write_curve(out_file, sol);
    std::printf("energy_J %.9g\n", sol.energy);
    std::printf("endpoint_residual_m %.9g\n", sol.endpoint_residual);
    std::printf("base_angle_residual_rad %.9g\n", sol.base_angle_residual);
    if (sol.tip_angle_residual)
        std::printf("tip_angle_residual_rad %.9g\n", *sol.tip_angle_residual);
    std::printf("converged %d\n", sol.converged ? 1 : 0);
    std::printf("iterations %d\n", sol.iterations);
    std::printf("curve_csv %s\n", out_file.c_str());
    return sol.converged ? kExitOk : kExitSolveFailed;
}

int cmd_safety_map(const GlobalOpts& g, int random_count,
                   std::optional<std::uint64_t> map_seed,
                   const std::vector<double>& grid_bounds, double resolution,
                   const std::string& out_file) {
    const ScenarioConfig cfg = load_config(g);
    MapMode mode;
    if (random_count > 0) {
        RandomMode rm;
        rm.count = random_count;
        rm.seed = map_seed.value_or(g.seed.value_or(cfg.base_seed));
        mode = rm;
    } else {
        if (grid_bounds.size() != 4)
            throw ConfigError("grid", "expected x_min,x_max,z_min,z_max");
        if (!(resolution > 0.0)) throw ConfigError("resolution", "must be > 0");
        mode = GridMode{grid_bounds[0], grid_bounds[1], grid_bounds[2], grid_bounds[3],
                        resolution};
    }
    const SafetyMap map =
        build_safety_map(cfg.branch.params, mode, {}, cfg.branch.frame);
    csv::write_safety_map(out_file, map);
    int counts[3] = {0, 0, 0};
    for (const auto& s : map.samples) counts[static_cast<int>(s.label)]++;
    std::printf("safe %d\ncaution %d\nrisky %d\n", counts[0], counts[1], counts[2]);
    std::printf("map_csv %s\n", out_file.c_str());
    return kExitOk;
}

int cmd_plan(const GlobalOpts& g, int start_id, const std::string& out_file) {
    const ScenarioConfig cfg = load_config(g);
    if (start_id < 0 || start_id >= static_cast<int>(cfg.starts.size()))
        throw ConfigError("start-id", "outside the configured starts");
    const BranchSafetyGate gate = build_gate(cfg, g.verbose);
    PlannerConfig pc = cfg.planner;
    if (g.seed) pc.rng_seed = *g.seed;
    try {
        const PlanResult res = plan(cfg.starts[start_id], cfg.goal, cfg.constraint,
                                    cfg.branch.params, pc, nullptr, gate.predicate());
        if (res.status != PlanStatus::Success) {
            std::cerr << "planning timed out without reaching the goal region\n";
            return kExitSolveFailed;
        }
        csv::write_path(out_file, res.path);
        std::printf("waypoints %zu\n", res.path.waypoints.size());
        std::printf("path_length_m %.9g\n", res.path.total_length);
        std::printf("final_offset_m %.9g\n", res.path.final_offset);
        std::printf("planning_time_s %.9g\n", res.path.planning_time);
        std::printf("iterations %d\n", res.path.iterations_used);
        std::printf("path_csv %s\n", out_file.c_str());
        return kExitOk;
    } catch (const InfeasibleStart& e) {
        std::cerr << "infeasible start: " << e.what() << "\n";
        return kExitInfeasible;
    }
}

int cmd_simulate(const GlobalOpts& g, int start_id, int trial_id) {
    const ScenarioConfig cfg = load_config(g);
    if (start_id < 0 || start_id >= static_cast<int>(cfg.starts.size()))
        throw ConfigError("start-id", "outside the configured starts");
    ensure_out_dir(g.out);
    const BranchSafetyGate gate = build_gate(cfg, g.verbose);
    const TrialArtifacts art = run_trial(cfg, start_id, trial_id, gate.predicate());
    const std::string stem =
        g.out + "/trial_s" + std::to_string(start_id) + "_t" + std::to_string(trial_id);
    csv::write_force_trace(stem + "_force.csv", art.outcome.log);
    csv::write_events(stem + "_events.csv", art.outcome.log);
    if (!art.outcome.paths.empty())
        csv::write_path(stem + "_path.csv", art.outcome.paths.back());
    std::printf("success %d\n", art.row.success ? 1 : 0);
    std::printf("final_offset_m %.9g\n", art.row.final_offset);
    std::printf("replan_count %d\n", art.row.replan_count);
    std::printf("peak_force_N %.9g\n", art.row.peak_force);
    std::printf("planning_time_s %.9g\n", art.row.planning_time);
    if (!art.outcome.failure_note.empty())
        std::printf("note %s\n", art.outcome.failure_note.c_str());
    return art.row.success ? kExitOk : kExitFailedTrials;
}

int cmd_experiment(const GlobalOpts& g) {
    const ScenarioConfig cfg = load_config(g);
    ensure_out_dir(g.out);
    const BranchSafetyGate gate = build_gate(cfg, g.verbose);
    const ExperimentResult result = run_experiment(cfg, gate.predicate(), g.jobs);

    write_report_csv(g.out + "/report.csv", result.report);
    for (std::size_t i = 0; i < result.outcomes.size(); ++i) {
        const auto& row = result.report.rows[i];
        const std::string stem = g.out + "/trial_s" + std::to_string(row.start_id) +
                                 "_t" + std::to_string(row.trial_id);
        csv::write_force_trace(stem + "_force.csv", result.outcomes[i].log);
        csv::write_events(stem + "_events.csv", result.outcomes[i].log);
    }
    {
        // Aggregate from the published CSV so `report` can verify the
        // summary bit-for-bit against the rows of record.
        const TrialReport of_record = read_report_csv(
            g.out + "/report.csv", static_cast<int>(cfg.starts.size()));
        std::ofstream out(g.out + "/summary.json");
        out << summary_json(cfg, of_record).dump(2) << "\n";
    }
    {
        std::ofstream out(g.out + "/manifest.json");
        out << plot_manifest(cfg).dump(2) << "\n";
    }
    int successes = 0;
    for (const auto& r : result.report.rows) successes += r.success ? 1 : 0;
    std::printf("trials %zu\n", result.report.rows.size());
    std::printf("successes %d\n", successes);
    std::printf("report_csv %s/report.csv\n", g.out.c_str());
    std::printf("summary_json %s/summary.json\n", g.out.c_str());
    return result.any_failed ? kExitFailedTrials : kExitOk;
}

int cmd_report(const GlobalOpts& g, const std::string& dir) {
    const ScenarioConfig cfg = load_config(g);
    const TrialReport report =
        read_report_csv(dir + "/report.csv", static_cast<int>(cfg.starts.size()));

    // Verify stored aggregates against a recomputation from the rows.
    std::ifstream in(dir + "/summary.json");
    if (!in) throw ConfigError("report", "cannot open " + dir + "/summary.json");
    json stored;
    in >> stored;
    const json recomputed = summary_json(cfg, report);
    if (stored != recomputed) {
        std::cerr << "summary.json does not match aggregates recomputed from "
                     "report.csv\n";
        return kExitConfig;
    }

    std::printf("%-8s %-8s %-18s %-14s %-8s\n", "start", "success", "planning_time_s",
                "replans", "path_m");
    for (const auto& a : report.per_start)
        std::printf("%-8d %d/%-6d %8.1f (+/-%5.2f) %5.1f (+/-%4.2f) %6.3f\n",
                    a.start_id, a.success_count, a.trials, a.planning_time_mean,
                    a.planning_time_std, a.replan_mean, a.replan_std,
                    a.path_length_mean);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Force-aware branch manipulation planner and simulator"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--config", g.config_path, "Scenario config JSON")->envname("BRAMBLE_CONFIG");
    app.add_option("--seed", g.seed, "Override the config base seed");
    app.add_option("--out", g.out, "Output directory or file prefix");
    app.add_option("--jobs", g.jobs, "Parallel trials for experiment");
    app.add_flag("--verbose", g.verbose, "Progress chatter on stderr");

    // solve-shape
    double tx = 0.0, tz = 0.0;
    std::optional<double> tip;
    std::string curve_out = "curve.csv";
    auto* solve = app.add_subcommand("solve-shape", "Solve one branch shape");
    solve->add_option("--target-x", tx, "Endpoint x in the branch plane [m]")->required();
    solve->add_option("--target-z", tz, "Endpoint z in the branch plane [m]")->required();
    solve->add_option("--tip-angle", tip, "Optional tip tangent angle [rad]");
    solve->add_option("--curve-out", curve_out, "Curve CSV path");

    // safety-map
    int random_count = 0;
    std::optional<std::uint64_t> map_seed;
    std::vector<double> grid_bounds;
    double resolution = 0.0;
    std::string map_out = "safety_map.csv";
    auto* smap = app.add_subcommand("safety-map", "Classify endpoint safety zones");
    smap->add_option("--random", random_count, "Number of random endpoints");
    smap->add_option("--map-seed", map_seed, "Seed for random mode");
    smap->add_option("--grid", grid_bounds, "x_min x_max z_min z_max")->expected(4);
    smap->add_option("--resolution", resolution, "Grid cell size [m]");
    smap->add_option("--map-out", map_out, "Map CSV path");

    // plan
    int start_id = 0;
    std::string path_out = "path.csv";
    auto* planc = app.add_subcommand("plan", "Plan once from a configured start");
    planc->add_option("--start-id", start_id, "Index into starts");
    planc->add_option("--path-out", path_out, "Path CSV output");

    // simulate
    int sim_start = 0, sim_trial = 0;
    auto* simc = app.add_subcommand("simulate", "Execute one trial in the simulator");
    simc->add_option("--start-id", sim_start, "Index into starts");
    simc->add_option("--trial", sim_trial, "Trial index (seed derivation)");

    // experiment
    auto* expc = app.add_subcommand("experiment", "Run the full trial matrix");

    // report
    std::string report_dir = ".";
    auto* repc = app.add_subcommand("report", "Verify and print an experiment report");
    repc->add_option("--in", report_dir, "Directory containing report.csv");

    CLI11_PARSE(app, argc, argv);

    try {
        if (solve->parsed()) return cmd_solve_shape(g, tx, tz, tip, curve_out);
        if (smap->parsed())
            return cmd_safety_map(g, random_count, map_seed, grid_bounds, resolution,
                                  map_out);
        if (planc->parsed()) return cmd_plan(g, start_id, path_out);
        if (simc->parsed()) return cmd_simulate(g, sim_start, sim_trial);
        if (expc->parsed()) return cmd_experiment(g);
        if (repc->parsed()) return cmd_report(g, report_dir);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const InfeasibleStart& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return kExitInfeasible;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitOk;
}
