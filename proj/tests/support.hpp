// Shared fixtures for the test binaries: random loss maps, toy horizons and an
// exact lattice search over battery-power paths used as an optimality oracle.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "hevmpc/drive_cycle.hpp"
#include "hevmpc/problem.hpp"
#include "hevmpc/vehicle_model.hpp"

namespace hevmpc::testing {

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

/// Willans-style quadratic with the given peak efficiency.
inline Quadratic willans(double c0, double c1, double peak_eff) {
    const double half_gap = 0.5 * (1.0 / peak_eff - c1);
    return {half_gap * half_gap / c0, c1, c0};
}

/// Random but physically shaped engine and motor quadratics.
inline StepQuadratics random_quadratics(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    StepQuadratics q;
    q.engine = willans(1000.0 + 5000.0 * u(rng), 2.0 + 0.4 * u(rng), 0.30 + 0.1 * u(rng));
    q.motor = willans(100.0 + 400.0 * u(rng), 1.02 + 0.05 * u(rng), 0.85 + 0.1 * u(rng));
    return q;
}

/// A hybrid step with random quadratics, speed and demand, with bounds. Retries
/// until the envelope is non-empty.
struct RandomHybridStep {
    StepInput input;
    StepBounds bounds;
};

inline RandomHybridStep random_hybrid_step(std::mt19937_64& rng, const PowertrainModel& model) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (;;) {
        StepInput in;
        in.step_class = StepClass::Hybrid;
        in.omega = 120.0 + 350.0 * u(rng);
        in.demand = 2e3 + 40e3 * u(rng);
        in.quadratics = random_quadratics(rng);
        try {
            const StepBounds b = restricted_bounds(in, model);
            if (b.battery_hi - b.battery_lo > 1.0) return {in, b};
        } catch (const std::exception&) {
        }
    }
}

/// Random horizon of all-hybrid steps (speeds in the third gear band, gentle
/// uphill gradient so demand stays positive).
inline DriveScenario random_toy_scenario(std::mt19937_64& rng, std::size_t n, const PowertrainModel& model) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> v(n), theta(n);
    double x = 14.0 + 4.0 * u(rng);
    for (std::size_t k = 0; k < n; ++k) {
        v[k] = x;
        x = std::clamp(x + 2.0 * (u(rng) - 0.4), 13.5, 19.5);
        theta[k] = 0.01 + 0.03 * u(rng);
    }
    return scenario_from_horizon(std::move(v), std::move(theta), model.battery.energy_at_soc(0.56), model);
}

/// Toy problem whose SOC window makes full discharge infeasible, so the
/// optimum is non-trivial.
inline ConvexProblem random_toy_problem(std::mt19937_64& rng, std::size_t n, const PowertrainModel& model) {
    for (;;) {
        const DriveScenario s = random_toy_scenario(rng, n, model);
        ConvexProblem base = build_problem(s, model);
        if (base.hybrid_steps().size() != n) continue;
        const double drain_hi = base.pb_hi().sum();
        const double drain_lo = base.pb_lo().sum();
        if (!(drain_hi > 0.0)) continue;
        // Allow roughly half the maximal discharge.
        EnergyLimits lim;
        lim.initial = s.initial_energy;
        lim.lo = s.initial_energy - 0.5 * drain_hi;
        lim.hi = s.initial_energy + std::max(0.0, -drain_lo);
        return build_problem(s, model, lim);
    }
}

/// Exact minimum over all battery-power paths whose states lie on the lattice
/// E_0 - j*delta (non-hybrid steps shift the whole lattice by their fixed P_b).
/// Every lattice path is considered; this is brute force organised by state.
struct LatticeResult {
    double objective{std::numeric_limits<double>::infinity()};
    std::vector<double> pb;
};

inline LatticeResult lattice_optimum(const ConvexProblem& prob, double delta) {
    const std::size_t n = prob.horizon();
    const double inf = std::numeric_limits<double>::infinity();
    // Offsets of the lattice per column.
    std::vector<double> offset(n + 1, prob.initial_energy());
    for (std::size_t k = 0; k < n; ++k)
        offset[k + 1] = offset[k] - (prob.is_hybrid(k) ? 0.0 : prob.pb_lo()[static_cast<Eigen::Index>(k)]);
    // Column k nodes: offset[k] + i*delta for i in [imin_k, imax_k].
    std::vector<long> imin(n + 1), imax(n + 1);
    for (std::size_t k = 0; k <= n; ++k) {
        imin[k] = static_cast<long>(std::ceil((prob.energy_lo() - offset[k]) / delta - 1e-9));
        imax[k] = static_cast<long>(std::floor((prob.energy_hi() - offset[k]) / delta + 1e-9));
    }
    std::vector<std::vector<double>> cost(n + 1);
    std::vector<std::vector<long>> next(n);
    cost[n].assign(static_cast<std::size_t>(imax[n] - imin[n] + 1), 0.0);
    for (std::size_t k = n; k-- > 0;) {
        const auto i = static_cast<Eigen::Index>(k);
        const std::size_t width = static_cast<std::size_t>(std::max(0L, imax[k] - imin[k] + 1));
        cost[k].assign(width, inf);
        next[k].assign(width, 0);
        for (long a = imin[k]; a <= imax[k]; ++a) {
            double best = inf;
            long arg = 0;
            if (!prob.is_hybrid(k)) {
                if (a >= imin[k + 1] && a <= imax[k + 1]) {
                    best = prob.step(k).idle_fuel + cost[k + 1][static_cast<std::size_t>(a - imin[k + 1])];
                    arg = a;
                }
            } else {
                // P_b = (a - b) * delta must lie in [lo, hi] (lattice offsets equal across hybrid steps).
                const long b_lo = std::max(imin[k + 1], static_cast<long>(std::ceil(a - prob.pb_hi()[i] / delta - 1e-9)));
                const long b_hi = std::min(imax[k + 1], static_cast<long>(std::floor(a - prob.pb_lo()[i] / delta + 1e-9)));
                for (long b = b_lo; b <= b_hi; ++b) {
                    const double tail = cost[k + 1][static_cast<std::size_t>(b - imin[k + 1])];
                    if (tail == inf) continue;
                    const double pb = std::clamp(static_cast<double>(a - b) * delta, prob.pb_lo()[i], prob.pb_hi()[i]);
                    const double c = prob.cost(k).value(pb) + tail;
                    if (c < best) {
                        best = c;
                        arg = b;
                    }
                }
            }
            cost[k][static_cast<std::size_t>(a - imin[k])] = best;
            next[k][static_cast<std::size_t>(a - imin[k])] = arg;
        }
    }
    LatticeResult r;
    if (imin[0] > 0 || imax[0] < 0) return r;
    const double total = cost[0][static_cast<std::size_t>(-imin[0])];
    if (total == inf) return r;
    long a = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        const long b = next[k][static_cast<std::size_t>(a - imin[k])];
        r.pb.push_back(prob.is_hybrid(k) ? std::clamp(static_cast<double>(a - b) * delta, prob.pb_lo()[i], prob.pb_hi()[i])
                                         : prob.pb_lo()[i]);
        a = b;
    }
    // Objective over hybrid steps only, matching ConvexProblem::objective.
    r.objective = 0.0;
    for (std::size_t k = 0; k < n; ++k)
        if (prob.is_hybrid(k)) r.objective += prob.cost(k).value(r.pb[k]);
    return r;
}

/// Lattice optimum refined by halving delta until consecutive objectives differ
/// by less than `tol` relative (or `max_halvings` is reached).
struct RefinedLattice {
    LatticeResult result;
    double delta{0.0};
    double change{std::numeric_limits<double>::infinity()};
};

inline RefinedLattice refined_lattice(const ConvexProblem& prob, double tol = 1e-3,
                                      double start_divisions = 100.0, int max_halvings = 5) {
    RefinedLattice r;
    r.delta = (prob.pb_hi() - prob.pb_lo()).maxCoeff() / start_divisions;
    r.result = lattice_optimum(prob, r.delta);
    for (int h = 0; h < max_halvings; ++h) {
        LatticeResult finer = lattice_optimum(prob, 0.5 * r.delta);
        r.change = std::abs(finer.objective - r.result.objective) / std::abs(finer.objective);
        r.delta *= 0.5;
        r.result = std::move(finer);
        if (r.change < tol) break;
    }
    return r;
}

/// Writes `text` to a fresh file under the system temp directory and returns its path.
inline std::string temp_file(const std::string& name, const std::string& text) {
    const std::string path = std::string(P_tmpdir) + "/hevmpc_test_" + name;
    std::ofstream(path) << text;
    return path;
}

}  // namespace hevmpc::testing
