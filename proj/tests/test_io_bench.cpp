#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "hevmpc/bench.hpp"
#include "hevmpc/errors.hpp"
#include "hevmpc/io.hpp"
#include "support.hpp"

using namespace hevmpc;
using hevmpc::testing::temp_file;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

/// Smooth synthetic cycle, feasible at +-2 degrees; the SOC window binds at -2 and +2.
CycleData synthetic_cycle(std::size_t n = 300) {
    CycleData c;
    for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k);
        c.t.push_back(t);
        c.v.push_back(std::min(17.0 + 6.0 * std::sin(t / 12.0), t));
        c.theta.push_back(0.0);
    }
    return c;
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream in(path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        rows.push_back(cells);
    }
    return rows;
}

std::string scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("hevmpc_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

}  // namespace

TEST_CASE("model JSON") {
    SUBCASE("round trip") {
        PowertrainModel m;
        m.vehicle.mass = 1650.0;
        m.battery.resistance = 0.12;
        m.limits.motor_hi = 140.0;
        m.idle_fuel = false;
        const auto j = model_to_json(m);
        const auto back = model_from_json(j);
        CHECK(back.vehicle.mass == 1650.0);
        CHECK(back.battery.resistance == 0.12);
        CHECK(back.battery.energy_lo == doctest::Approx(m.battery.energy_lo));
        CHECK(back.limits.motor_hi == 140.0);
        CHECK_FALSE(back.idle_fuel);
        CHECK(back.gears.bands().size() == m.gears.bands().size());
        CHECK(model_to_json(back) == j);
    }
    SUBCASE("empty object gives the defaults") {
        const auto m = model_from_json(nlohmann::json::object());
        const PowertrainModel d;
        CHECK(m.vehicle.mass == d.vehicle.mass);
        CHECK(m.engine_map.speeds() == d.engine_map.speeds());
    }
    SUBCASE("unknown keys are errors") {
        CHECK_THROWS_AS(model_from_json({{"vehicle", {{"mas", 1.0}}}}), ParseError);
        CHECK_THROWS_AS(model_from_json({{"colour", "red"}}), ParseError);
    }
    SUBCASE("map paths resolve next to the model file") {
        const auto dir = scratch_dir("model");
        std::filesystem::copy_file(std::string(HEVMPC_DATA_DIR) + "/engine_map.csv", dir + "/eng.csv");
        {
            std::ofstream(dir + "/model.json") << R"({"engine_map": "eng.csv", "battery": {"soc_lo": 0.45}})";
        }
        const auto m = load_model(dir + "/model.json");
        CHECK(m.engine_map.speeds() == default_engine_map().speeds());
        CHECK(m.battery.energy_lo == doctest::Approx(0.45 * m.battery.full_energy()));
    }
}

TEST_CASE("solution JSON round trip and CSV exports") {
    std::mt19937_64 rng(2);
    const PowertrainModel model;
    const auto p = hevmpc::testing::random_toy_problem(rng, 10, model);
    AdmmParams params;
    params.record_objective = true;
    const auto sol = solve_admm(p, params);
    const auto back = solution_from_json(solution_to_json(sol));
    CHECK(back.battery_power == sol.battery_power);
    CHECK(back.energy == sol.energy);
    CHECK(back.fuel == sol.fuel);
    CHECK(back.objective == sol.objective);
    CHECK(back.iterations == sol.iterations);
    CHECK(back.params == sol.params);
    CHECK(back.audit.max_soc_violation_pct == sol.audit.max_soc_violation_pct);
    CHECK_THROWS_AS(solution_from_json({{"solver", "x"}}), ParseError);

    const auto dir = scratch_dir("solution");
    write_json(dir + "/s.json", solution_to_json(sol));
    CHECK(solution_from_json(read_json(dir + "/s.json")).fuel == sol.fuel);

    write_solution_csv(dir + "/s.csv", sol, p);
    const auto rows = read_csv(dir + "/s.csv");
    REQUIRE(rows.size() == 11);
    CHECK(rows[0] == std::vector<std::string>{"k", "class", "demand", "battery_power", "engine_power",
                                              "motor_power", "fuel", "energy", "soc_pct"});
    CHECK(std::stod(rows[10][7]) == sol.energy[10]);

    write_trace_csv(dir + "/t.csv", sol);
    const auto trace = read_csv(dir + "/t.csv");
    CHECK(trace[0] == std::vector<std::string>{"iter", "r_norm", "s_norm", "objective"});
    CHECK(trace.size() == sol.iterations + 1);
}

TEST_CASE("logspace") {
    const auto g = logspace(1e-5, 1e-3, 3);
    REQUIRE(g.size() == 3);
    CHECK(g[0] == 1e-5);
    CHECK(g[1] == doctest::Approx(1e-4).epsilon(1e-14));
    CHECK(g[2] == 1e-3);
    CHECK(logspace(2.0, 5.0, 1) == std::vector<double>{2.0});
    CHECK_THROWS_AS(logspace(0.0, 1.0, 3), std::invalid_argument);
}

TEST_CASE("reference cache") {
    std::mt19937_64 rng(3);
    const auto p = hevmpc::testing::random_toy_problem(rng, 10, PowertrainModel{});
    const auto dir = scratch_dir("cache");
    ReferenceCache a(dir);
    const auto s1 = a.get(p, 200);
    const auto s2 = a.get(p, 200);
    CHECK(a.computed() == 1);
    CHECK(s1.fuel == s2.fuel);
    ReferenceCache b(dir);
    const auto s3 = b.get(p, 200);
    CHECK(b.computed() == 0);
    CHECK(s3.fuel == s1.fuel);
    CHECK(problem_hash(p) == problem_hash(p));
}

TEST_CASE("rho grid") {
    std::mt19937_64 rng(4);
    const auto p = hevmpc::testing::random_toy_problem(rng, 12, PowertrainModel{});
    const auto ref = solve_dp(p, {.energy_points = 1000, .control_points = std::nullopt});
    const AdmmParams defaults;

    const auto one = tune_rho(p, ref, {defaults.rho1}, {defaults.rho2}, 50);
    REQUIRE(one.size() == 1);
    CHECK(std::isfinite(one[0].J));
    CHECK(argmin_cell(one) == 0);

    const auto r1 = logspace(1e-5, 1e-3, 3);
    const auto r2 = logspace(1e-9, 1e-7, 3);
    const auto serial = tune_rho(p, ref, r1, r2, 50, 1);
    const auto parallel = tune_rho(p, ref, r1, r2, 50, 4);
    REQUIRE(serial.size() == 9);
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(serial[i].rho1 == r1[i / 3]);
        CHECK(serial[i].rho2 == r2[i % 3]);
        CHECK(serial[i].J == parallel[i].J);
    }
    const auto best = argmin_cell(serial);
    for (const auto& c : serial) CHECK(serial[best].J <= c.J);

    const auto dir = scratch_dir("rho");
    write_rho_csv(dir + "/rho.csv", serial);
    const auto rows = read_csv(dir + "/rho.csv");
    REQUIRE(rows.size() == 10);
    CHECK(rows[0].back() == "is_min");
    int marked = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) marked += rows[i].back() == "1";
    CHECK(marked == 1);
    CHECK_THROWS_AS(tune_rho(p, ref, {}, {1e-8}), std::invalid_argument);
}

TEST_CASE("sweep") {
    const auto cycle = synthetic_cycle();
    const PowertrainModel model;
    ExperimentConfig cfg;
    cfg.theta_s = {-2 * kDeg, -1 * kDeg, 0.0, 1 * kDeg, 2 * kDeg};
    cfg.repeats = 1;
    cfg.jobs = 4;
    cfg.reference_points = 300;
    ReferenceCache cache;

    const auto rows = run_sweep(cfg, cycle, model, cache);
    CHECK(rows.size() == 30);
    CHECK(cache.computed() == 5);
    CHECK(rows[0].iterations > 10);
    for (const auto& r : rows) {
        CHECK(r.status == "ok");
        CHECK(r.J >= 0.0);
        CHECK(r.mean_time_s > 0.0);
        CHECK(r.repeats == 1);
    }
    CHECK(rows[0].scenario_id == "theta-2.00deg_mu1.00");
    CHECK(rows[0].solver == "admm");
    CHECK(rows[3].solver == "dp");
    CHECK(rows[3].param_value == 30.0);

    SUBCASE("rerun is reproducible apart from timing") {
        ExperimentConfig again = cfg;
        again.seed = 99;
        again.jobs = 1;
        const auto rows2 = run_sweep(again, cycle, model, cache);
        REQUIRE(rows2.size() == rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            CHECK(rows2[i].scenario_id == rows[i].scenario_id);
            CHECK(rows2[i].J == rows[i].J);
            CHECK(rows2[i].objective == rows[i].objective);
            CHECK(rows2[i].iterations == rows[i].iterations);
            CHECK(rows2[i].max_soc_violation_pct == rows[i].max_soc_violation_pct);
        }
    }
    SUBCASE("CSV schema") {
        const auto dir = scratch_dir("sweep");
        write_sweep_csv(dir + "/sweep.csv", rows);
        const auto csv = read_csv(dir + "/sweep.csv");
        REQUIRE(csv.size() == 31);
        CHECK(csv[0] == std::vector<std::string>{"scenario_id", "theta_s_deg", "mu", "solver", "param_name",
                                                 "param_value", "repeats", "mean_time_s", "mean_setup_time_s",
                                                 "J", "max_soc_violation_pct", "converged", "objective",
                                                 "iterations", "status"});
        for (std::size_t i = 1; i < csv.size(); ++i) CHECK(csv[i].size() == 15);
    }
    SUBCASE("failing cells are recorded and the sweep continues") {
        ExperimentConfig bad = cfg;
        bad.theta_s = {0.0, 25 * kDeg};
        bad.energy_points = {30};
        bad.epsilon = {1e5};
        const auto out = run_sweep(bad, cycle, model, cache);
        REQUIRE(out.size() == 4);
        CHECK(out[0].status == "ok");
        CHECK(out[2].status.rfind("error:", 0) == 0);
        CHECK(std::isnan(out[2].J));
    }
    SUBCASE("invalid configurations") {
        ExperimentConfig bad = cfg;
        bad.repeats = 0;
        CHECK_THROWS_AS(run_sweep(bad, cycle, model, cache), std::invalid_argument);
        bad = cfg;
        bad.solvers = {"simplex"};
        CHECK_THROWS_AS(run_sweep(bad, cycle, model, cache), std::invalid_argument);
        bad = cfg;
        bad.mu = {1.5};
        CHECK_THROWS_AS(run_sweep(bad, cycle, model, cache), std::invalid_argument);
    }
}

TEST_CASE("trajectory CSV") {
    const auto cycle = synthetic_cycle();
    const PowertrainModel model;
    ScenarioOptions o;
    o.theta_s = 2 * kDeg;
    const auto p = build_problem(make_scenario(cycle, o, model), model);
    const auto opt = solve_dp(p, {.energy_points = 600, .control_points = std::nullopt});
    const auto admm = solve_admm(p);
    const auto dp = solve_dp(p, {.energy_points = 60, .control_points = std::nullopt});
    const auto dir = scratch_dir("traj");
    write_trajectory_csv(dir + "/traj.csv", p, opt, admm, dp);
    const auto rows = read_csv(dir + "/traj.csv");
    REQUIRE(rows.size() == p.horizon() + 2);
    CHECK(rows[0] == std::vector<std::string>{"k", "E_opt", "E_admm", "E_dp", "soc_opt_pct", "soc_admm_pct",
                                              "soc_dp_pct", "soc_lo_pct", "soc_hi_pct"});
    for (std::size_t i = 1; i < rows.size(); ++i) {
        REQUIRE(rows[i].size() == 9);
        const double soc = std::stod(rows[i][4]);
        CHECK(soc >= std::stod(rows[i][7]) - 1e-9);
        CHECK(soc <= std::stod(rows[i][8]) + 1e-9);
        CHECK(std::stod(rows[i][5]) >= std::stod(rows[i][7]) - 1.0);
    }
    Solution short_sol = dp;
    short_sol.energy.conservativeResize(3);
    CHECK_THROWS_AS(write_trajectory_csv(dir + "/bad.csv", p, opt, admm, short_sol), std::invalid_argument);
}
