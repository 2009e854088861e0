#include "hevmpc/dp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace hevmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Slack, in grid cells, for treating a state as on the mesh edge.
constexpr double kEdgeSlack = 1e-9;

std::vector<double> linspace(double lo, double hi, std::size_t n) {
    std::vector<double> out(n);
    if (n == 1) {
        out[0] = lo;
        return out;
    }
    const double step = (hi - lo) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) out[i] = lo + step * static_cast<double>(i);
    out.back() = hi;
    return out;
}

/// Position of `energy` on the mesh: cell index j and weight w in [0, 1].
struct MeshPos {
    std::size_t j;
    double w;
};

/// Column-k view used by the inner loops.
struct Column {
    const double* cost;
    double lo;  // feasible range of this column
    double hi;
};

class MeshLocator {
public:
    MeshLocator(double e_lo, double spacing, std::size_t n)
        : e_lo_(e_lo), inv_spacing_(1.0 / spacing), slack_(kEdgeSlack * spacing), n_(n) {}

    [[nodiscard]] double slack() const noexcept { return slack_; }

    [[nodiscard]] MeshPos locate(double energy) const noexcept {
        const double top = static_cast<double>(n_ - 1);
        const double x = std::clamp((energy - e_lo_) * inv_spacing_, 0.0, top);
        auto j = static_cast<std::size_t>(x);
        if (j >= n_ - 1) j = n_ - 2;
        return {j, x - static_cast<double>(j)};
    }

    [[nodiscard]] double cost(const Column& col, double energy) const noexcept {
        if (!(energy >= col.lo - slack_ && energy <= col.hi + slack_)) return kInf;
        const MeshPos p = locate(energy);
        const double a = col.cost[p.j];
        const double b = col.cost[p.j + 1];
        if (a < kInf && b < kInf) return a + p.w * (b - a);
        if (p.w == 0.0 || b == kInf) return a;
        return b;
    }

private:
    double e_lo_;
    double inv_spacing_;
    double slack_;
    std::size_t n_;
};

Column column(const DpMesh& mesh, std::size_t k) {
    return {&mesh.cost_to_go[k * mesh.energy_points], mesh.feasible_lo[k], mesh.feasible_hi[k]};
}

}  // namespace

std::size_t DpParams::resolved_control_points() const {
    return control_points.value_or(std::max<std::size_t>(2, energy_points / 10));
}

DpMesh make_mesh(const ConvexProblem& prob, const DpParams& params) {
    if (params.energy_points < 2) throw std::invalid_argument("DP needs at least 2 energy points");
    const std::size_t np = params.resolved_control_points();
    if (np < 1) throw std::invalid_argument("DP needs at least 1 control point");

    DpMesh mesh;
    mesh.energy_points = params.energy_points;
    mesh.control_points = np;
    mesh.horizon = prob.horizon();
    mesh.energy_grid = linspace(prob.energy_lo(), prob.energy_hi(), mesh.energy_points);
    mesh.cost_to_go.assign(mesh.energy_points * (mesh.horizon + 1), kInf);
    mesh.policy.assign(mesh.energy_points * (mesh.horizon + 1), 0.0);
    for (std::size_t j = 0; j < mesh.energy_points; ++j) mesh.cost(j, mesh.horizon) = 0.0;

    mesh.controls.resize(mesh.horizon);
    for (std::size_t k = 0; k < mesh.horizon; ++k) {
        const auto& b = prob.step(k).bounds;
        mesh.controls[k] = prob.is_hybrid(k) ? linspace(b.engine_lo_plus, b.engine_hi, np)
                                             : std::vector<double>{b.engine_lo};
    }

    mesh.feasible_lo.assign(mesh.horizon + 1, prob.energy_lo());
    mesh.feasible_hi.assign(mesh.horizon + 1, prob.energy_hi());
    for (std::size_t k = mesh.horizon; k-- > 0;) {
        const auto i = static_cast<Eigen::Index>(k);
        mesh.feasible_lo[k] = std::max(prob.energy_lo(), mesh.feasible_lo[k + 1] + prob.pb_lo()[i]);
        mesh.feasible_hi[k] = std::min(prob.energy_hi(), mesh.feasible_hi[k + 1] + prob.pb_hi()[i]);
    }
    return mesh;
}

double interp_cost(const DpMesh& mesh, double energy, std::size_t k) {
    const MeshLocator loc(mesh.energy_grid.front(), mesh.spacing(), mesh.energy_points);
    return loc.cost(column(mesh, k), energy);
}

void backward_pass(const ConvexProblem& prob, DpMesh& mesh) {
    const std::size_t ne = mesh.energy_points;
    const MeshLocator loc(mesh.energy_grid.front(), mesh.spacing(), ne);
    std::vector<double> fuel;
    std::vector<double> drain;

    for (std::size_t k = mesh.horizon; k-- > 0;) {
        const auto& st = prob.step(k);
        const Column next = column(mesh, k + 1);
        double* here = &mesh.cost_to_go[k * ne];
        double* act = &mesh.policy[k * ne];
        const auto& ctrl = mesh.controls[k];

        if (!prob.is_hybrid(k)) {
            const double pb = prob.pb_lo()[static_cast<Eigen::Index>(k)];
            for (std::size_t j = 0; j < ne; ++j) {
                here[j] = st.idle_fuel + loc.cost(next, mesh.energy_grid[j] - pb);
                act[j] = ctrl[0];
            }
            continue;
        }

        fuel.resize(ctrl.size());
        drain.resize(ctrl.size());
        for (std::size_t i = 0; i < ctrl.size(); ++i) {
            fuel[i] = fuel_power(ctrl[i], st.quadratics);
            drain[i] = battery_power(st.demand - ctrl[i], st.quadratics, prob.battery(), k);
        }
        for (std::size_t j = 0; j < ne; ++j) {
            double best = kInf;
            std::size_t arg = 0;
            for (std::size_t i = 0; i < ctrl.size(); ++i) {
                const double c = fuel[i] + loc.cost(next, mesh.energy_grid[j] - drain[i]);
                if (c < best) {
                    best = c;
                    arg = i;
                }
            }
            here[j] = best;
            act[j] = ctrl[arg];
        }
    }
}

Solution forward_rollout(const ConvexProblem& prob, const DpMesh& mesh) {
    const std::size_t n = prob.horizon();
    const MeshLocator loc(mesh.energy_grid.front(), mesh.spacing(), mesh.energy_points);

    Eigen::VectorXd pb(static_cast<Eigen::Index>(n));
    Eigen::VectorXd engine(static_cast<Eigen::Index>(n));
    double e = prob.initial_energy();
    bool feasible = e >= mesh.feasible_lo[0] - loc.slack() && e <= mesh.feasible_hi[0] + loc.slack();

    for (std::size_t k = 0; k < n; ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        const auto& st = prob.step(k);
        if (!prob.is_hybrid(k)) {
            pb[i] = prob.pb_lo()[i];
            engine[i] = st.bounds.engine_lo;
        } else {
            const MeshPos p = loc.locate(e);
            const double c0 = mesh.cost(p.j, k);
            const double c1 = mesh.cost(p.j + 1, k);
            const double u0 = mesh.control(p.j, k);
            const double u1 = mesh.control(p.j + 1, k);
            double u = u0 + p.w * (u1 - u0);
            if (c0 < kInf && c1 == kInf) u = u0;
            if (c0 == kInf && c1 < kInf) u = u1;
            pb[i] = battery_power(st.demand - u, st.quadratics, prob.battery(), k);
            engine[i] = u;

            // The interpolated control may step outside the next column's feasible
            // range (convexity gap of g, or a cell straddling the edge); move it to
            // the nearest edge along this step's battery-power range.
            const double after = e - pb[i];
            const double lo_next = mesh.feasible_lo[k + 1];
            const double hi_next = mesh.feasible_hi[k + 1];
            if (after > hi_next || after < lo_next) {
                const double needed = e - (after > hi_next ? hi_next : lo_next);
                const double clipped = std::clamp(needed, prob.pb_lo()[i], prob.pb_hi()[i]);
                if (std::abs(clipped - needed) > loc.slack()) feasible = false;
                pb[i] = clipped;
                engine[i] = st.demand - prob.cost(k).motor_power(clipped);
            }
        }
        e -= pb[i];
        if (e < prob.energy_lo() - loc.slack() || e > prob.energy_hi() + loc.slack()) feasible = false;
    }

    Solution sol = solution_from_battery_power(prob, pb);
    for (std::size_t k = 0; k < n; ++k) {
        if (!prob.is_hybrid(k)) continue;
        const auto i = static_cast<Eigen::Index>(k);
        const auto& st = prob.step(k);
        sol.engine_power[i] = engine[i];
        sol.motor_power[i] = st.demand - engine[i];
        sol.fuel[i] = fuel_power(engine[i], st.quadratics);
    }
    sol.objective = 0.0;
    for (auto k : prob.hybrid_steps()) sol.objective += sol.fuel[static_cast<Eigen::Index>(k)];
    sol.total_fuel = sol.fuel.sum();
    sol.solver = "dp";
    sol.feasible = feasible;
    sol.converged = feasible;
    sol.params = {{"energy_points", static_cast<double>(mesh.energy_points)},
                  {"control_points", static_cast<double>(mesh.control_points)},
                  {"cost_to_go", interp_cost(mesh, prob.initial_energy(), 0)}};
    sol.audit = audit(sol, prob);
    return sol;
}

Solution solve_dp(const ConvexProblem& prob, const DpParams& params) {
    const auto t0 = std::chrono::steady_clock::now();
    DpMesh mesh = make_mesh(prob, params);
    backward_pass(prob, mesh);
    Solution sol = forward_rollout(prob, mesh);
    sol.solve_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return sol;
}

}  // namespace hevmpc
