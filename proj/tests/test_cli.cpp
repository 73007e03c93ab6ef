#include "bramble/scenario.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct CmdResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

CmdResult run_cli(const std::string& args) {
    const std::string cmd = std::string(BRAMBLE_CLI_PATH) + " " + args + " 2>&1";
    std::array<char, 4096> buf{};
    CmdResult result;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    while (std::fgets(buf.data(), buf.size(), pipe) != nullptr) result.output += buf.data();
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch_dir() {
    const fs::path dir = fs::temp_directory_path() / "bramble_cli_test";
    fs::create_directories(dir);
    return dir;
}

/// Small, fast scenario: coarse gate raster, few planner iterations.
fs::path write_mini_config(bool broken = false) {
    bramble::json j{
        {"scenario_name", "cli_mini"},
        {"branch",
         {{"length_L_m", 0.6},
          {"flexural_rigidity_EI_Nm2", 0.5},
          {"base_position_m", {0.0, 0.0, 0.0}},
          {"noise_sigma_N", 0.0},
          {"rng_seed", 21}}},
        {"gate_cell_m", 0.03},
        {"starts", {{{"position_m", {0.0, 0.0, 0.6}}}}},
        {"goal", {{"center_m", {0.3, 0.0, 0.45}}, {"radius_R_m", 0.05}}},
        {"planner",
         {{"max_iterations_N", 1200}, {"rng_seed", 5}}},
        {"exec", {{"rng_seed", 7}}},
        {"trials_per_start", 1},
        {"base_seed", 1234},
    };
    if (broken) j["branch"].erase("length_L_m");
    const fs::path path =
        scratch_dir() / (broken ? "mini_broken.json" : "mini.json");
    std::ofstream out(path);
    out << j.dump(2);
    return path;
}

}  // namespace

TEST_CASE("solve-shape emits the curve and exit codes") {
    const auto cfg = write_mini_config();
    const auto curve = scratch_dir() / "curve.csv";

    SECTION("rest target converges with zero energy") {
        const auto r = run_cli("--config " + cfg.string() +
                               " solve-shape --target-x 0 --target-z 0.6 --curve-out " +
                               curve.string());
        REQUIRE(r.exit_code == 0);
        CHECK(r.output.find("energy_J 0") != std::string::npos);
        const auto rows = bramble::csv::read_rows(curve.string());
        REQUIRE(rows.size() >= 2);
        CHECK(rows[0] == std::vector<std::string>{"s", "theta", "x", "z"});
        const auto& last = rows.back();
        CHECK(std::stod(last[0]) == Catch::Approx(0.6));          // s = L
        CHECK(std::stod(last[1]) == Catch::Approx(bramble::kPi / 2));
        CHECK(std::stod(last[2]) == Catch::Approx(0.0).margin(1e-9));
        CHECK(std::stod(last[3]) == Catch::Approx(0.6));
    }
    SECTION("unreachable targets exit 3") {
        const auto r = run_cli("--config " + cfg.string() +
                               " solve-shape --target-x 0 --target-z 1.2");
        CHECK(r.exit_code == 3);
    }
    SECTION("malformed config exits 1 and names the field") {
        const auto broken = write_mini_config(true);
        const auto r = run_cli("--config " + broken.string() +
                               " solve-shape --target-x 0 --target-z 0.5");
        CHECK(r.exit_code == 1);
        CHECK(r.output.find("length_L_m") != std::string::npos);
    }
}

TEST_CASE("safety-map runs are reproducible") {
    const auto cfg = write_mini_config();
    const auto map_a = scratch_dir() / "map_a.csv";
    const auto map_b = scratch_dir() / "map_b.csv";

    const auto ra = run_cli("--config " + cfg.string() +
                            " safety-map --random 200 --map-seed 7 --map-out " +
                            map_a.string());
    REQUIRE(ra.exit_code == 0);
    const auto rb = run_cli("--config " + cfg.string() +
                            " safety-map --random 200 --map-seed 7 --map-out " +
                            map_b.string());
    REQUIRE(rb.exit_code == 0);
    CHECK(slurp(map_a) == slurp(map_b));  // byte-identical

    // all three labels occur under the 1.1 L sampling margin
    CHECK(ra.output.find("safe 0\n") == std::string::npos);
    CHECK(ra.output.find("caution 0\n") == std::string::npos);
    CHECK(ra.output.find("risky 0\n") == std::string::npos);

    SECTION("grid mode validates its resolution") {
        const auto r = run_cli("--config " + cfg.string() +
                               " safety-map --grid -0.7 0.7 -0.7 0.7 --resolution 0");
        CHECK(r.exit_code == 1);
        CHECK(r.output.find("resolution") != std::string::npos);
    }
}

TEST_CASE("plan writes the waypoint CSV") {
    const auto cfg = write_mini_config();
    const auto path_csv = scratch_dir() / "path.csv";
    const auto r = run_cli("--config " + cfg.string() + " plan --start-id 0 --path-out " +
                           path_csv.string());
    REQUIRE(r.exit_code == 0);
    const auto rows = bramble::csv::read_rows(path_csv.string());
    REQUIRE(rows.size() >= 3);
    CHECK(rows[0] == std::vector<std::string>{"idx", "x", "y", "z", "qw", "qx", "qy",
                                              "qz", "cum_length"});
}

TEST_CASE("experiment emits a deterministic report and simulate matches") {
    const auto cfg = write_mini_config();
    const auto out_a = scratch_dir() / "exp_a";
    const auto out_b = scratch_dir() / "exp_b";
    fs::remove_all(out_a);
    fs::remove_all(out_b);

    const auto ra =
        run_cli("--config " + cfg.string() + " --out " + out_a.string() + " experiment");
    REQUIRE(ra.exit_code == 0);  // anomaly-free scenario: every trial succeeds
    const auto rb =
        run_cli("--config " + cfg.string() + " --out " + out_b.string() + " experiment");
    REQUIRE(rb.exit_code == 0);

    CHECK(slurp(out_a / "report.csv") == slurp(out_b / "report.csv"));
    CHECK(slurp(out_a / "summary.json") == slurp(out_b / "summary.json"));

    const auto rows = bramble::csv::read_rows((out_a / "report.csv").string());
    REQUIRE(rows.size() == 2);  // header + one trial
    CHECK(rows[1][2] == "1");   // success
    CHECK(rows[1][6] == "0");   // replan_count

    CHECK(fs::exists(out_a / "trial_s0_t0_force.csv"));
    CHECK(fs::exists(out_a / "trial_s0_t0_events.csv"));
    CHECK(fs::exists(out_a / "manifest.json"));

    SECTION("report verifies and prints the aggregate table") {
        const auto r = run_cli("--config " + cfg.string() + " report --in " +
                               out_a.string());
        CHECK(r.exit_code == 0);
        CHECK(r.output.find("start") != std::string::npos);
    }
}
