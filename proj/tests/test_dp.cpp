#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "hevmpc/dp.hpp"
#include "support.hpp"

using namespace hevmpc;
using hevmpc::testing::rel_err;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ConvexProblem toy(std::uint64_t seed, std::size_t n) {
    std::mt19937_64 rng(seed);
    return hevmpc::testing::random_toy_problem(rng, n, PowertrainModel{});
}

/// Every lattice path by depth-first recursion, no state merging.
double naive_lattice(const ConvexProblem& p, double delta) {
    const std::size_t n = p.horizon();
    double best = kInf;
    std::function<void(std::size_t, double, double)> rec = [&](std::size_t k, double e, double acc) {
        if (k == n) {
            best = std::min(best, acc);
            return;
        }
        const auto i = static_cast<Eigen::Index>(k);
        const double lo = p.pb_lo()[i], hi = p.pb_hi()[i];
        if (!p.is_hybrid(k)) {
            const double next = e - lo;
            if (next >= p.energy_lo() - 1e-6 && next <= p.energy_hi() + 1e-6) rec(k + 1, next, acc);
            return;
        }
        for (long m = static_cast<long>(std::ceil(lo / delta - 1e-9)); m * delta <= hi + 1e-9 * delta; ++m) {
            const double pb = std::clamp(static_cast<double>(m) * delta, lo, hi);
            const double next = e - pb;
            if (next < p.energy_lo() - 1e-6 || next > p.energy_hi() + 1e-6) continue;
            rec(k + 1, next, acc + p.cost(k).value(pb));
        }
    };
    rec(0, p.initial_energy(), 0.0);
    return best;
}

}  // namespace

TEST_CASE("mesh layout") {
    const auto p = toy(1, 10);
    const auto mesh = make_mesh(p, {.energy_points = 60, .control_points = std::nullopt});
    CHECK(mesh.control_points == 6);
    CHECK(mesh.energy_grid.front() == p.energy_lo());
    CHECK(mesh.energy_grid.back() == p.energy_hi());
    for (std::size_t j = 1; j < 60; ++j)
        CHECK(mesh.energy_grid[j] - mesh.energy_grid[j - 1] == doctest::Approx(mesh.spacing()).epsilon(1e-9));
    for (std::size_t j = 0; j < 60; ++j) CHECK(mesh.cost(j, 10) == 0.0);
    for (std::size_t k = 0; k < 10; ++k) {
        REQUIRE(mesh.controls[k].size() == 6);
        CHECK(mesh.controls[k].front() == p.step(k).bounds.engine_lo_plus);
        CHECK(mesh.controls[k].back() == p.step(k).bounds.engine_hi);
        CHECK(mesh.feasible_lo[k] <= mesh.feasible_hi[k]);
    }
    CHECK(DpParams{.energy_points = 1000, .control_points = std::nullopt}.resolved_control_points() == 100);
    CHECK(DpParams{.energy_points = 10, .control_points = 7}.resolved_control_points() == 7);
    CHECK_THROWS_AS(make_mesh(p, {.energy_points = 1, .control_points = std::nullopt}), std::invalid_argument);
}

TEST_CASE("interp_cost") {
    const auto p = toy(2, 6);
    auto mesh = make_mesh(p, {.energy_points = 30, .control_points = 5});
    for (std::size_t j = 0; j < 30; ++j) mesh.cost(j, 6) = 3.0 * static_cast<double>(j * j);
    const double h = mesh.spacing();
    CHECK(interp_cost(mesh, mesh.energy_grid[7], 6) == doctest::Approx(147.0).epsilon(1e-12));
    CHECK(interp_cost(mesh, mesh.energy_grid[7] + 0.5 * h, 6) == doctest::Approx(0.5 * (147.0 + 192.0)));
    CHECK(interp_cost(mesh, p.energy_lo() - 0.01 * h, 6) == kInf);
    CHECK(interp_cost(mesh, p.energy_hi() + 0.01 * h, 6) == kInf);
    CHECK(interp_cost(mesh, p.energy_hi(), 6) == doctest::Approx(3.0 * 29 * 29).epsilon(1e-12));
    // Outside a column's backward-feasible range.
    mesh.feasible_lo[6] = mesh.energy_grid[10];
    CHECK(interp_cost(mesh, mesh.energy_grid[9], 6) == kInf);
    CHECK(interp_cost(mesh, mesh.energy_grid[10], 6) == doctest::Approx(300.0).epsilon(1e-12));
}

TEST_CASE("backward pass on one hybrid step matches hand enumeration") {
    const PowertrainModel model;
    const auto s = scenario_from_horizon({15.0, 15.0}, {0.03, -0.1}, model.battery.energy_at_soc(0.56), model);
    const auto base = build_problem(s, model);
    REQUIRE(base.is_hybrid(0));
    REQUIRE_FALSE(base.is_hybrid(1));
    EnergyLimits lim;
    lim.lo = base.initial_energy() - 0.5 * base.pb_hi()[0];
    lim.hi = base.initial_energy() + 2e4;
    const auto p = build_problem(s, model, lim);

    auto mesh = make_mesh(p, {.energy_points = 41, .control_points = 3});
    backward_pass(p, mesh);
    const auto& st = p.step(0);
    const double pb1 = p.pb_lo()[1];
    for (std::size_t j = 0; j < 41; ++j) {
        const double e = mesh.energy_grid[j];
        double best = kInf;
        double arg = 0.0;
        for (int i = 0; i < 3; ++i) {
            const double u = st.bounds.engine_lo_plus + (st.bounds.engine_hi - st.bounds.engine_lo_plus) * i / 2.0;
            const double e1 = e - battery_power(st.demand - u, st.quadratics, model.battery);
            const double e2 = e1 - pb1;
            const bool ok = e1 >= p.energy_lo() && e1 <= p.energy_hi() && e2 >= p.energy_lo() && e2 <= p.energy_hi();
            const double c = ok ? fuel_power(u, st.quadratics) + p.step(1).idle_fuel : kInf;
            if (c < best) {
                best = c;
                arg = u;
            }
        }
        if (best == kInf) {
            CHECK(mesh.cost(j, 0) == kInf);
        } else {
            CHECK(rel_err(mesh.cost(j, 0), best) < 1e-12);
            CHECK(rel_err(mesh.control(j, 0), arg) < 1e-12);
        }
    }
}

TEST_CASE("all-braking horizon shifts the cost-to-go") {
    const PowertrainModel model;
    const auto p = build_problem(scenario_from_horizon({12.0, 12.0, 11.0, 10.0}, std::vector<double>(4, -0.08),
                                                       model.battery.energy_at_soc(0.52), model),
                                 model);
    auto mesh = make_mesh(p, {.energy_points = 200, .control_points = 20});
    backward_pass(p, mesh);
    for (std::size_t k = 0; k < 4; ++k)
        for (std::size_t j = 0; j < 200; ++j) {
            const double e = mesh.energy_grid[j];
            const double expect = p.step(k).idle_fuel + interp_cost(mesh, e - p.pb_lo()[static_cast<Eigen::Index>(k)], k + 1);
            if (expect == kInf) CHECK(mesh.cost(j, k) == kInf);
            else CHECK(mesh.cost(j, k) == doctest::Approx(expect).epsilon(1e-12));
        }
    const auto sol = solve_dp(p, {.energy_points = 200, .control_points = 20});
    CHECK(sol.feasible);
    CHECK(sol.battery_power == p.pb_lo());
}

TEST_CASE("lattice oracle agrees with naive path enumeration") {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        const auto p = toy(seed, 4);
        const double delta = (p.pb_hi() - p.pb_lo()).maxCoeff() / 12.0;
        const auto lat = hevmpc::testing::lattice_optimum(p, delta);
        const double naive = naive_lattice(p, delta);
        REQUIRE(naive < kInf);
        CHECK(rel_err(lat.objective, naive) < 1e-12);
    }
}

TEST_CASE("rollout") {
    SUBCASE("feasible, zero violation and exact dynamics on toys") {
        for (std::uint64_t seed = 10; seed < 20; ++seed) {
            const auto p = toy(seed, 10);
            for (std::size_t ne : {30, 60, 120}) {
                const auto sol = solve_dp(p, {.energy_points = ne, .control_points = std::nullopt});
                CHECK(sol.feasible);
                CHECK(sol.audit.max_soc_violation_pct == 0.0);
                CHECK(sol.audit.max_bound_violation == 0.0);
                for (Eigen::Index k = 0; k < sol.battery_power.size(); ++k)
                    CHECK(sol.energy[k + 1] == sol.energy[k] - sol.battery_power[k]);
            }
        }
    }
    SUBCASE("trivially feasible problems roll out along P_b_hi within one cell") {
        const PowertrainModel model;
        for (std::uint64_t seed = 3; seed < 8; ++seed) {
            std::mt19937_64 rng(seed);
            const auto sc = hevmpc::testing::random_toy_scenario(rng, 10, model);
            const auto base = build_problem(sc, model);
            const Eigen::VectorXd top = base.energy_trajectory(base.pb_hi());
            const double span = top.maxCoeff() - top.minCoeff();
            EnergyLimits lim;
            lim.hi = top.maxCoeff() + 0.5 * span;
            // Two cells of clearance below the trajectory.
            lim.lo = top.minCoeff() - 2.0 * (*lim.hi - top.minCoeff()) / 997.0;
            const auto p = build_problem(sc, model, lim);
            REQUIRE(trivial_solution(p));
            const auto sol = solve_dp(p, {.energy_points = 1000, .control_points = std::nullopt});
            const double cell = (p.energy_hi() - p.energy_lo()) / 999.0;
            CHECK((sol.energy - top).cwiseAbs().maxCoeff() <= cell);

            // Trajectory grazing the lower limit: still feasible.
            lim.lo = top.minCoeff() - 1.0;
            const auto q = build_problem(sc, model, lim);
            REQUIRE(trivial_solution(q));
            const auto tight = solve_dp(q, {.energy_points = 1000, .control_points = std::nullopt});
            CHECK(tight.feasible);
            CHECK(tight.audit.max_soc_violation_pct == 0.0);
        }
    }
    SUBCASE("repeated runs are identical") {
        const auto p = toy(5, 10);
        const auto a = solve_dp(p, {.energy_points = 120, .control_points = std::nullopt});
        const auto b = solve_dp(p, {.energy_points = 120, .control_points = std::nullopt});
        CHECK(a.battery_power == b.battery_power);
        CHECK(a.objective == b.objective);
    }
}

TEST_CASE("N_E = 1000 approaches the lattice optimum") {
    for (std::uint64_t seed = 40; seed < 45; ++seed) {
        const auto p = toy(seed, 8);
        const auto sol = solve_dp(p, {.energy_points = 1000, .control_points = std::nullopt});
        const auto oracle = hevmpc::testing::refined_lattice(p);
        REQUIRE(oracle.change < 1e-3);
        REQUIRE(sol.feasible);
        CHECK(std::abs(sol.objective - oracle.result.objective) <= 0.01 * oracle.result.objective);
    }
}

TEST_CASE("mesh refinement lowers J against the fine reference") {
    for (std::uint64_t seed = 50; seed < 55; ++seed) {
        const auto p = toy(seed, 30);
        const auto ref = solve_dp(p, {.energy_points = 1000, .control_points = std::nullopt});
        double prev = kInf;
        for (std::size_t ne : {30, 60, 120}) {
            const double j = fuel_metric(solve_dp(p, {.energy_points = ne, .control_points = std::nullopt}).fuel, ref.fuel);
            CHECK(j <= prev * 1.05);
            prev = j;
        }
    }
}
