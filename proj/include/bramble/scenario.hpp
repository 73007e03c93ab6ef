#pragma once

#include "bramble/core.hpp"
#include "bramble/csv.hpp"
#include "bramble/executor.hpp"
#include "bramble/planner.hpp"
#include "bramble/sim.hpp"

#include <json.hpp>

#include <atomic>
#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace bramble {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Scenario configuration
// ---------------------------------------------------------------------------

/// Full experiment description: branch, workspace constraint, start poses,
/// goal region, planner/executor knobs, and the trial matrix.
struct ScenarioConfig {
    std::string name = "scenario";
    SimBranch branch;
    BranchConstraint constraint;
    double gate_cell = 0.0;  ///< safety-gate raster cell; 0 = L/40
    std::vector<WaypointPose> starts;
    GoalRegion goal;
    PlannerConfig planner;
    ExecutionConfig exec;
    int trials_per_start = 1;
    std::uint64_t base_seed = 1;

    void validate() const {
        branch.validate();
        constraint.validate();
        planner.validate();
        exec.validate();
        if (starts.empty()) throw ConfigError("starts", "at least one start required");
        if (trials_per_start < 1)
            throw ConfigError("trials_per_start", "must be >= 1");
        if (!(goal.radius_R > 0.0)) throw ConfigError("goal.radius_R_m", "must be > 0");
    }
};

namespace detail {

template <typename T>
T require(const json& j, const std::string& field, const std::string& scope) {
    const std::string name = scope.empty() ? field : scope + "." + field;
    if (!j.contains(field)) throw ConfigError(name, "missing required field");
    try {
        return j.at(field).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(name, "has the wrong type");
    }
}

template <typename T>
T optional_field(const json& j, const std::string& field, T fallback,
                 const std::string& scope) {
    if (!j.contains(field)) return fallback;
    return require<T>(j, field, scope);
}

inline Vec3 vec3_field(const json& j, const std::string& field,
                       const std::string& scope) {
    const auto v = require<std::vector<double>>(j, field, scope);
    if (v.size() != 3)
        throw ConfigError(scope.empty() ? field : scope + "." + field,
                          "expected 3 numbers");
    return Vec3(v[0], v[1], v[2]);
}

inline Quat quat_field(const json& j, const std::string& field,
                       const std::string& scope, Quat fallback = {}) {
    if (!j.contains(field)) return fallback;
    const auto v = require<std::vector<double>>(j, field, scope);
    if (v.size() != 4)
        throw ConfigError(scope.empty() ? field : scope + "." + field,
                          "expected 4 numbers (w, x, y, z)");
    Quat q{v[0], v[1], v[2], v[3]};
    if (std::abs(q.norm() - 1.0) > 1e-6)
        throw ConfigError(scope.empty() ? field : scope + "." + field,
                          "quaternion must have unit norm");
    return q.normalized();
}

}  // namespace detail

/// Parse a scenario from JSON. Field names carry units; errors name the
/// offending field.
inline ScenarioConfig parse_scenario(const json& j) {
    using detail::optional_field;
    using detail::require;
    ScenarioConfig cfg;
    cfg.name = optional_field<std::string>(j, "scenario_name", "scenario", "");

    const json& jb = j.contains("branch") ? j.at("branch") : throw ConfigError("branch", "missing required field");
    cfg.branch.params.length_L = require<double>(jb, "length_L_m", "branch");
    cfg.branch.params.flexural_rigidity_EI =
        require<double>(jb, "flexural_rigidity_EI_Nm2", "branch");
    cfg.branch.params.base_angle_theta0 =
        optional_field<double>(jb, "base_angle_theta0_rad", kPi / 2, "branch");
    cfg.branch.params.num_harmonics = optional_field<int>(jb, "num_harmonics", 5, "branch");
    cfg.branch.params.quadrature_points =
        optional_field<int>(jb, "quadrature_points", 100, "branch");
    const Vec3 base = detail::vec3_field(jb, "base_position_m", "branch");
    const double azimuth = optional_field<double>(jb, "plane_azimuth_rad", 0.0, "branch");
    cfg.branch.frame = PlaneFrame::vertical(base, azimuth);
    cfg.branch.rest_orientation = detail::quat_field(jb, "rest_orientation_wxyz", "branch");
    cfg.branch.noise_sigma = optional_field<double>(jb, "noise_sigma_N", 0.5, "branch");
    cfg.branch.k_plane = optional_field<double>(jb, "k_plane_N_per_m", 50.0, "branch");
    cfg.branch.rng_seed = optional_field<std::uint64_t>(jb, "rng_seed", 0, "branch");
    if (jb.contains("anomalies")) {
        for (const auto& ja : jb.at("anomalies")) {
            AnomalyRegion a;
            a.center = detail::vec3_field(ja, "center_m", "branch.anomalies");
            a.radius = require<double>(ja, "radius_m", "branch.anomalies");
            a.stiffness_multiplier =
                require<double>(ja, "stiffness_multiplier", "branch.anomalies");
            cfg.branch.anomalies.push_back(a);
        }
    }

    cfg.constraint.base_point = base;
    cfg.constraint.plane_frame = cfg.branch.frame;
    cfg.constraint.height_h = optional_field<double>(
        j, "height_h_m", cfg.branch.params.length_L, "");
    cfg.gate_cell = optional_field<double>(j, "gate_cell_m", 0.0, "");

    if (!j.contains("starts")) throw ConfigError("starts", "missing required field");
    for (const auto& js : j.at("starts")) {
        WaypointPose wp;
        wp.position = detail::vec3_field(js, "position_m", "starts");
        wp.orientation = detail::quat_field(js, "orientation_wxyz", "starts");
        cfg.starts.push_back(wp);
    }

    const json& jg = j.contains("goal") ? j.at("goal") : throw ConfigError("goal", "missing required field");
    cfg.goal.center = detail::vec3_field(jg, "center_m", "goal");
    cfg.goal.radius_R = optional_field<double>(jg, "radius_R_m", 0.05, "goal");
    cfg.goal.goal_orientation = detail::quat_field(jg, "orientation_wxyz", "goal");

    if (j.contains("planner")) {
        const json& jp = j.at("planner");
        auto& p = cfg.planner;
        p.max_iterations_N = optional_field<int>(jp, "max_iterations_N", 5000, "planner");
        p.step_delta_q = optional_field<double>(jp, "step_delta_q_m", 0.05, "planner");
        p.neighbor_radius = optional_field<double>(jp, "neighbor_radius_m", 0.0, "planner");
        p.goal_bias = optional_field<double>(jp, "goal_bias", 0.05, "planner");
        p.rng_seed = optional_field<std::uint64_t>(jp, "rng_seed", 0, "planner");
        p.penalty_epsilon = optional_field<double>(jp, "penalty_epsilon_m", 1e-3, "planner");
        p.penalty_radius_r_prime =
            optional_field<double>(jp, "penalty_radius_r_prime_m", 0.15, "planner");
        p.penalty_weight = optional_field<double>(jp, "penalty_weight", 0.5, "planner");
        p.time_budget = optional_field<double>(jp, "time_budget_s", 400.0, "planner");
        p.virtual_seconds_per_iteration = optional_field<double>(
            jp, "virtual_seconds_per_iteration", 0.004, "planner");
    }

    if (j.contains("exec")) {
        const json& je = j.at("exec");
        auto& e = cfg.exec;
        e.force_threshold = optional_field<double>(je, "force_threshold_N", 40.0, "exec");
        e.max_replans = optional_field<int>(je, "max_replans", 50, "exec");
        e.goal_radius_R = optional_field<double>(je, "goal_radius_R_m",
                                                 cfg.goal.radius_R, "exec");
        e.total_time_budget =
            optional_field<double>(je, "total_time_budget_s", 400.0, "exec");
        e.rng_seed = optional_field<std::uint64_t>(je, "rng_seed", 0, "exec");
        e.servo.gain_kp = optional_field<double>(je, "servo_gain_kp", 2.0, "exec");
        e.servo.dt = optional_field<double>(je, "servo_dt_s", 0.1, "exec");
        e.servo.position_tol =
            optional_field<double>(je, "servo_position_tol_m", 2e-3, "exec");
        e.servo.angle_tol =
            optional_field<double>(je, "servo_angle_tol_rad", 1e-2, "exec");
        e.servo.max_steps = optional_field<int>(je, "servo_max_steps", 5000, "exec");
    } else {
        cfg.exec.goal_radius_R = cfg.goal.radius_R;
    }

    cfg.trials_per_start = optional_field<int>(j, "trials_per_start", 1, "");
    cfg.base_seed = optional_field<std::uint64_t>(j, "base_seed", 1, "");
    cfg.validate();
    return cfg;
}

inline json to_json(const ScenarioConfig& cfg) {
    json j;
    j["scenario_name"] = cfg.name;
    json jb;
    jb["length_L_m"] = cfg.branch.params.length_L;
    jb["flexural_rigidity_EI_Nm2"] = cfg.branch.params.flexural_rigidity_EI;
    jb["base_angle_theta0_rad"] = cfg.branch.params.base_angle_theta0;
    jb["num_harmonics"] = cfg.branch.params.num_harmonics;
    jb["quadrature_points"] = cfg.branch.params.quadrature_points;
    jb["base_position_m"] = {cfg.branch.frame.origin.x(), cfg.branch.frame.origin.y(),
                             cfg.branch.frame.origin.z()};
    jb["plane_azimuth_rad"] = std::atan2(cfg.branch.frame.ex.y(), cfg.branch.frame.ex.x());
    jb["rest_orientation_wxyz"] = {cfg.branch.rest_orientation.w,
                                   cfg.branch.rest_orientation.x,
                                   cfg.branch.rest_orientation.y,
                                   cfg.branch.rest_orientation.z};
    jb["noise_sigma_N"] = cfg.branch.noise_sigma;
    jb["k_plane_N_per_m"] = cfg.branch.k_plane;
    jb["rng_seed"] = cfg.branch.rng_seed;
    json janoms = json::array();
    for (const auto& a : cfg.branch.anomalies) {
        json ja;
        ja["center_m"] = {a.center.x(), a.center.y(), a.center.z()};
        ja["radius_m"] = a.radius;
        ja["stiffness_multiplier"] = a.stiffness_multiplier;
        janoms.push_back(ja);
    }
    jb["anomalies"] = janoms;
    j["branch"] = jb;
    j["height_h_m"] = cfg.constraint.height_h;
    j["gate_cell_m"] = cfg.gate_cell;
    json jstarts = json::array();
    for (const auto& s : cfg.starts) {
        json js;
        js["position_m"] = {s.position.x(), s.position.y(), s.position.z()};
        js["orientation_wxyz"] = {s.orientation.w, s.orientation.x, s.orientation.y,
                                  s.orientation.z};
        jstarts.push_back(js);
    }
    j["starts"] = jstarts;
    json jg;
    jg["center_m"] = {cfg.goal.center.x(), cfg.goal.center.y(), cfg.goal.center.z()};
    jg["radius_R_m"] = cfg.goal.radius_R;
    jg["orientation_wxyz"] = {cfg.goal.goal_orientation.w, cfg.goal.goal_orientation.x,
                              cfg.goal.goal_orientation.y, cfg.goal.goal_orientation.z};
    j["goal"] = jg;
    json jp;
    jp["max_iterations_N"] = cfg.planner.max_iterations_N;
    jp["step_delta_q_m"] = cfg.planner.step_delta_q;
    jp["neighbor_radius_m"] = cfg.planner.neighbor_radius;
    jp["goal_bias"] = cfg.planner.goal_bias;
    jp["rng_seed"] = cfg.planner.rng_seed;
    jp["penalty_epsilon_m"] = cfg.planner.penalty_epsilon;
    jp["penalty_radius_r_prime_m"] = cfg.planner.penalty_radius_r_prime;
    jp["penalty_weight"] = cfg.planner.penalty_weight;
    jp["time_budget_s"] = cfg.planner.time_budget;
    jp["virtual_seconds_per_iteration"] = cfg.planner.virtual_seconds_per_iteration;
    j["planner"] = jp;
    json je;
    je["force_threshold_N"] = cfg.exec.force_threshold;
    je["max_replans"] = cfg.exec.max_replans;
    je["goal_radius_R_m"] = cfg.exec.goal_radius_R;
    je["total_time_budget_s"] = cfg.exec.total_time_budget;
    je["rng_seed"] = cfg.exec.rng_seed;
    je["servo_gain_kp"] = cfg.exec.servo.gain_kp;
    je["servo_dt_s"] = cfg.exec.servo.dt;
    je["servo_position_tol_m"] = cfg.exec.servo.position_tol;
    je["servo_angle_tol_rad"] = cfg.exec.servo.angle_tol;
    je["servo_max_steps"] = cfg.exec.servo.max_steps;
    j["exec"] = je;
    j["trials_per_start"] = cfg.trials_per_start;
    j["base_seed"] = cfg.base_seed;
    return j;
}

inline ScenarioConfig load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config", std::string("JSON parse error: ") + e.what());
    }
    return parse_scenario(j);
}

// ---------------------------------------------------------------------------
// Trials and reports
// ---------------------------------------------------------------------------

/// Per-trial seed derivation: base_seed mixed with (start_id, trial_id) and a
/// per-stream salt, so removing any trial never shifts another's randomness.
inline std::uint64_t trial_seed(std::uint64_t base, int start_id, int trial_id,
                                std::uint64_t salt) {
    return derive_seed(derive_seed(base, static_cast<std::uint64_t>(start_id),
                                   static_cast<std::uint64_t>(trial_id)),
                       salt);
}

struct TrialRow {
    int start_id = 0;
    int trial_id = 0;
    bool success = false;
    double final_offset = 0.0;
    double path_length = 0.0;
    double planning_time = 0.0;
    int replan_count = 0;
    double peak_force = 0.0;
};

struct StartAggregate {
    int start_id = 0;
    int trials = 0;
    int success_count = 0;
    double planning_time_mean = 0.0;
    double planning_time_std = 0.0;
    double replan_mean = 0.0;
    double replan_std = 0.0;
    double path_length_mean = 0.0;
    double goal_offset_mean = -1.0;  ///< over successful trials; -1 if none
};

struct TrialReport {
    std::vector<TrialRow> rows;
    std::vector<StartAggregate> per_start;
};

namespace detail {

struct MeanStd {
    double mean = 0.0, stddev = 0.0;
};

inline MeanStd mean_std(const std::vector<double>& v) {
    MeanStd out;
    if (v.empty()) return out;
    for (double x : v) out.mean += x;
    out.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
        double acc = 0.0;
        for (double x : v) acc += (x - out.mean) * (x - out.mean);
        out.stddev = std::sqrt(acc / static_cast<double>(v.size() - 1));
    }
    return out;
}

}  // namespace detail

inline std::vector<StartAggregate> aggregate_rows(const std::vector<TrialRow>& rows,
                                                  int num_starts) {
    std::vector<StartAggregate> out;
    for (int sid = 0; sid < num_starts; ++sid) {
        StartAggregate agg;
        agg.start_id = sid;
        std::vector<double> pt, rp, pl, offs;
        for (const auto& r : rows) {
            if (r.start_id != sid) continue;
            ++agg.trials;
            agg.success_count += r.success ? 1 : 0;
            pt.push_back(r.planning_time);
            rp.push_back(static_cast<double>(r.replan_count));
            pl.push_back(r.path_length);
            if (r.success) offs.push_back(r.final_offset);
        }
        const auto pts = detail::mean_std(pt);
        const auto rps = detail::mean_std(rp);
        agg.planning_time_mean = pts.mean;
        agg.planning_time_std = pts.stddev;
        agg.replan_mean = rps.mean;
        agg.replan_std = rps.stddev;
        agg.path_length_mean = detail::mean_std(pl).mean;
        agg.goal_offset_mean = offs.empty() ? -1.0 : detail::mean_std(offs).mean;
        out.push_back(agg);
    }
    return out;
}

struct TrialArtifacts {
    TrialRow row;
    ExecutionOutcome outcome;
};

/// One seeded execution of the scenario.
inline TrialArtifacts run_trial(const ScenarioConfig& cfg, int start_id, int trial_id,
                                const SafetyPredicate& gate) {
    SimBranch branch = cfg.branch;
    branch.rng_seed = trial_seed(cfg.base_seed, start_id, trial_id, 2);
    PlannerConfig pc = cfg.planner;
    pc.rng_seed = trial_seed(cfg.base_seed, start_id, trial_id, 1);
    ExecutionConfig ec = cfg.exec;
    ec.rng_seed = trial_seed(cfg.base_seed, start_id, trial_id, 3);

    TrialArtifacts art;
    art.outcome = execute(cfg.starts[start_id], cfg.goal, branch, cfg.constraint, pc,
                          ec, gate);
    art.row = TrialRow{start_id,
                       trial_id,
                       art.outcome.success,
                       art.outcome.final_offset,
                       art.outcome.executed_path_length,
                       art.outcome.planning_seconds,
                       art.outcome.replan_count,
                       art.outcome.peak_force_overall};
    return art;
}

/// Full trial matrix; trials may run on several threads, results are ordered
/// by (start_id, trial_id) regardless. A throwing trial is recorded as failed
/// and does not abort the batch. Returns rows + whether any trial failed.
struct ExperimentResult {
    TrialReport report;
    std::vector<ExecutionOutcome> outcomes;  ///< by flat trial index
    bool any_failed = false;
};

inline ExperimentResult run_experiment(const ScenarioConfig& cfg,
                                       const SafetyPredicate& gate, int jobs = 1) {
    cfg.validate();
    const int n_starts = static_cast<int>(cfg.starts.size());
    const int total = n_starts * cfg.trials_per_start;
    ExperimentResult result;
    result.outcomes.resize(total);
    result.report.rows.resize(total);

    std::atomic<int> next{0};
    auto worker = [&]() {
        while (true) {
            const int idx = next.fetch_add(1);
            if (idx >= total) return;
            const int sid = idx / cfg.trials_per_start;
            const int tid = idx % cfg.trials_per_start;
            TrialRow row;
            row.start_id = sid;
            row.trial_id = tid;
            try {
                auto art = run_trial(cfg, sid, tid, gate);
                row = art.row;
                result.outcomes[idx] = std::move(art.outcome);
            } catch (const std::exception&) {
                row.success = false;  // recorded as a failed trial
            }
            result.report.rows[idx] = row;
        }
    };

    const int n_threads = std::max(1, std::min(jobs, total));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    for (const auto& r : result.report.rows)
        if (!r.success) result.any_failed = true;
    result.report.per_start = aggregate_rows(result.report.rows, n_starts);
    return result;
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

inline void write_report_csv(const std::string& path, const TrialReport& report) {
    auto out = csv::open_out(path);
    out << "start_id,trial_id,success,final_offset,path_length,planning_time,"
           "replan_count,peak_force\n";
    for (const auto& r : report.rows)
        out << r.start_id << ',' << r.trial_id << ',' << (r.success ? 1 : 0) << ','
            << csv::fmt(r.final_offset) << ',' << csv::fmt(r.path_length) << ','
            << csv::fmt(r.planning_time) << ',' << r.replan_count << ','
            << csv::fmt(r.peak_force) << '\n';
}

inline TrialReport read_report_csv(const std::string& path, int num_starts) {
    TrialReport report;
    const auto rows = csv::read_rows(path);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& c = rows[i];
        if (c.size() != 8) throw Error("malformed report row in " + path);
        TrialRow r;
        r.start_id = std::stoi(c[0]);
        r.trial_id = std::stoi(c[1]);
        r.success = c[2] == "1";
        r.final_offset = std::stod(c[3]);
        r.path_length = std::stod(c[4]);
        r.planning_time = std::stod(c[5]);
        r.replan_count = std::stoi(c[6]);
        r.peak_force = std::stod(c[7]);
        report.rows.push_back(r);
    }
    report.per_start = aggregate_rows(report.rows, num_starts);
    return report;
}

inline json summary_json(const ScenarioConfig& cfg, const TrialReport& report) {
    json j;
    j["scenario"] = cfg.name;
    json per_start = json::array();
    for (const auto& a : report.per_start) {
        json js;
        js["start_id"] = a.start_id;
        js["success_count"] = a.success_count;
        js["planning_time_mean"] = a.planning_time_mean;
        js["planning_time_std"] = a.planning_time_std;
        js["replan_mean"] = a.replan_mean;
        js["replan_std"] = a.replan_std;
        js["path_length_mean"] = a.path_length_mean;
        js["goal_offset_mean"] = a.goal_offset_mean;
        per_start.push_back(js);
    }
    j["per_start"] = per_start;
    json totals;
    int succ = 0;
    double replans = 0.0, plan_time = 0.0;
    for (const auto& r : report.rows) {
        succ += r.success ? 1 : 0;
        replans += r.replan_count;
        plan_time += r.planning_time;
    }
    const double n = std::max<std::size_t>(report.rows.size(), 1);
    totals["trials"] = report.rows.size();
    totals["successes"] = succ;
    totals["success_rate"] = static_cast<double>(succ) / n;
    totals["replan_mean"] = replans / n;
    totals["planning_time_mean"] = plan_time / n;
    j["totals"] = totals;
    return j;
}

/// Chart manifest: which CSVs to plot and how. Rendering is left to external
/// tools.
inline json plot_manifest(const ScenarioConfig& cfg) {
    json charts = json::array();
    charts.push_back({{"kind", "force_vs_time"},
                      {"files", "trial_s*_t*_force.csv"},
                      {"x", "time"},
                      {"y", "magnitude"},
                      {"threshold_N", cfg.exec.force_threshold}});
    charts.push_back({{"kind", "safety_map_scatter"},
                      {"files", "safety_map.csv"},
                      {"x", "x"},
                      {"y", "z"},
                      {"color", "label"}});
    charts.push_back({{"kind", "path_polyline"},
                      {"files", "path_s*.csv"},
                      {"x", "x"},
                      {"y", "y"},
                      {"z", "z"}});
    return json{{"scenario", cfg.name}, {"charts", charts}};
}

}  // namespace bramble
