#include "bramble/scenario.hpp"

#include "support/scenarios.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace bramble;
using Catch::Approx;

namespace {

json minimal_config() {
    return json{
        {"scenario_name", "unit"},
        {"branch",
         {{"length_L_m", 0.6},
          {"flexural_rigidity_EI_Nm2", 0.5},
          {"base_position_m", {0.0, 0.0, 0.0}},
          {"noise_sigma_N", 0.0}}},
        {"starts", {{{"position_m", {0.0, 0.0, 0.6}}}}},
        {"goal", {{"center_m", {0.3, 0.0, 0.45}}, {"radius_R_m", 0.05}}},
    };
}

}  // namespace

TEST_CASE("scenario parsing fills defaults and validates") {
    const ScenarioConfig cfg = parse_scenario(minimal_config());
    CHECK(cfg.name == "unit");
    CHECK(cfg.branch.params.length_L == 0.6);
    CHECK(cfg.branch.params.num_harmonics == 5);
    CHECK(cfg.constraint.height_h == 0.6);  // defaults to L
    CHECK(cfg.planner.max_iterations_N == 5000);
    CHECK(cfg.exec.force_threshold == 40.0);
    CHECK(cfg.exec.goal_radius_R == 0.05);
    CHECK(cfg.trials_per_start == 1);
}

TEST_CASE("parse errors name the offending field") {
    auto broken = minimal_config();
    broken["branch"].erase("length_L_m");
    try {
        parse_scenario(broken);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.field == "branch.length_L_m");
    }

    auto bad_goal = minimal_config();
    bad_goal["goal"]["center_m"] = {1.0, 2.0};
    try {
        parse_scenario(bad_goal);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.field == "goal.center_m");
    }

    auto bad_type = minimal_config();
    bad_type["branch"]["flexural_rigidity_EI_Nm2"] = "stiff";
    CHECK_THROWS_AS(parse_scenario(bad_type), ConfigError);
}

TEST_CASE("config serialization round-trips field for field") {
    ScenarioConfig cfg = testsupport::anomaly_scenario(3.0, 0.25);
    cfg.planner.neighbor_radius = 0.12;
    cfg.exec.max_replans = 17;
    cfg.trials_per_start = 4;
    const ScenarioConfig back = parse_scenario(to_json(cfg));
    CHECK(back.name == cfg.name);
    CHECK(back.branch.params.length_L == cfg.branch.params.length_L);
    CHECK(back.branch.params.num_harmonics == cfg.branch.params.num_harmonics);
    CHECK(back.branch.noise_sigma == cfg.branch.noise_sigma);
    CHECK(back.branch.anomalies.size() == cfg.branch.anomalies.size());
    CHECK(back.branch.anomalies[0].stiffness_multiplier ==
          cfg.branch.anomalies[0].stiffness_multiplier);
    CHECK(back.branch.frame.origin == cfg.branch.frame.origin);
    CHECK(back.constraint.height_h == cfg.constraint.height_h);
    CHECK(back.starts.size() == cfg.starts.size());
    CHECK(back.starts[0].position == cfg.starts[0].position);
    CHECK(back.goal.center == cfg.goal.center);
    CHECK(back.goal.radius_R == cfg.goal.radius_R);
    CHECK(back.planner.neighbor_radius == cfg.planner.neighbor_radius);
    CHECK(back.planner.rng_seed == cfg.planner.rng_seed);
    CHECK(back.exec.max_replans == cfg.exec.max_replans);
    CHECK(back.trials_per_start == cfg.trials_per_start);
    CHECK(back.base_seed == cfg.base_seed);
    // serialize(parse(serialize(x))) is byte-identical
    CHECK(to_json(back).dump(2) == to_json(cfg).dump(2));
}

TEST_CASE("trial seeds are independent per (start, trial)") {
    const std::uint64_t base = 99;
    CHECK(trial_seed(base, 0, 0, 1) != trial_seed(base, 0, 1, 1));
    CHECK(trial_seed(base, 0, 0, 1) != trial_seed(base, 1, 0, 1));
    CHECK(trial_seed(base, 0, 0, 1) != trial_seed(base, 0, 0, 2));
    CHECK(trial_seed(base, 3, 7, 2) == trial_seed(base, 3, 7, 2));
}

TEST_CASE("report CSV round-trips and aggregates recompute") {
    TrialReport report;
    report.rows = {
        {0, 0, true, 0.01, 0.5, 12.0, 2, 33.0},
        {0, 1, false, 0.2, 0.7, 30.0, 5, 61.0},
        {1, 0, true, 0.03, 0.6, 8.0, 0, 12.0},
    };
    report.per_start = aggregate_rows(report.rows, 2);
    const std::string path =
        (std::filesystem::temp_directory_path() / "bramble_report_test.csv").string();
    write_report_csv(path, report);
    const TrialReport back = read_report_csv(path, 2);
    REQUIRE(back.rows.size() == report.rows.size());
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        CHECK(back.rows[i].start_id == report.rows[i].start_id);
        CHECK(back.rows[i].success == report.rows[i].success);
        CHECK(back.rows[i].final_offset == Approx(report.rows[i].final_offset));
        CHECK(back.rows[i].replan_count == report.rows[i].replan_count);
    }
    REQUIRE(back.per_start.size() == 2);
    CHECK(back.per_start[0].success_count == 1);
    CHECK(back.per_start[0].planning_time_mean == Approx(21.0));
    CHECK(back.per_start[0].replan_mean == Approx(3.5));
    CHECK(back.per_start[1].goal_offset_mean == Approx(0.03));
    std::filesystem::remove(path);
}

TEST_CASE("aggregates use successful trials for the goal offset") {
    std::vector<TrialRow> rows = {
        {0, 0, false, 0.5, 1.0, 1.0, 0, 1.0},
        {0, 1, false, 0.6, 1.0, 1.0, 0, 1.0},
    };
    const auto agg = aggregate_rows(rows, 1);
    CHECK(agg[0].goal_offset_mean == -1.0);  // no successes to average
    CHECK(agg[0].success_count == 0);
}

TEST_CASE("summary JSON carries the required keys") {
    const ScenarioConfig cfg = testsupport::anomaly_scenario(1.0);
    TrialReport report;
    report.rows = {{0, 0, true, 0.01, 0.4, 10.0, 1, 20.0}};
    report.per_start = aggregate_rows(report.rows, 1);
    const json j = summary_json(cfg, report);
    REQUIRE(j.contains("scenario"));
    REQUIRE(j.contains("per_start"));
    REQUIRE(j.contains("totals"));
    const auto& ps = j.at("per_start").at(0);
    for (const char* key :
         {"start_id", "success_count", "planning_time_mean", "planning_time_std",
          "replan_mean", "replan_std", "path_length_mean", "goal_offset_mean"})
        CHECK(ps.contains(key));
    CHECK(j.at("totals").at("trials") == 1);
    CHECK(j.at("totals").at("success_rate") == 1.0);
}
