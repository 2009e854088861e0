// Dynamic-programming baseline over an evenly spaced state-of-charge mesh.

#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "hevmpc/problem.hpp"

namespace hevmpc {

struct DpParams {
    std::size_t energy_points{1000};  // N_E
    /// N_P; defaults to N_E / 10 (at least 2).
    std::optional<std::size_t> control_points;

    [[nodiscard]] std::size_t resolved_control_points() const;
};

/// Cost-to-go and policy tables. Column-major: entry (j, k) lives at k * N_E + j.
struct DpMesh {
    std::size_t energy_points{0};
    std::size_t control_points{0};
    std::size_t horizon{0};
    std::vector<double> energy_grid;            // E_lo .. E_hi, evenly spaced
    std::vector<double> cost_to_go;             // N_E x (N + 1)
    std::vector<double> policy;                 // N_E x (N + 1), engine power
    std::vector<std::vector<double>> controls;  // per step: engine-power grid P_d
    // Exact interval of states at each k (0..N) from which the SOC window can
    // still be respected to the end of the horizon.
    std::vector<double> feasible_lo;
    std::vector<double> feasible_hi;

    [[nodiscard]] double& cost(std::size_t j, std::size_t k) { return cost_to_go[k * energy_points + j]; }
    [[nodiscard]] double cost(std::size_t j, std::size_t k) const { return cost_to_go[k * energy_points + j]; }
    [[nodiscard]] double& control(std::size_t j, std::size_t k) { return policy[k * energy_points + j]; }
    [[nodiscard]] double control(std::size_t j, std::size_t k) const { return policy[k * energy_points + j]; }
    [[nodiscard]] double spacing() const { return energy_grid[1] - energy_grid[0]; }
};

/// Mesh with grids laid out and column N zeroed.
DpMesh make_mesh(const ConvexProblem& prob, const DpParams& params);

/// Cost-to-go at column k, linear in E; +infinity outside the feasible range
/// of column k (a sub-interval of [E_lo, E_hi]). Inside it, a node whose own
/// value is infinite (the cell straddles the feasible edge) defers to its
/// finite neighbour.
double interp_cost(const DpMesh& mesh, double energy, std::size_t k);

/// Fills columns N-1..0 by exhaustive search over each step's control grid.
/// Ties go to the lowest control index.
void backward_pass(const ConvexProblem& prob, DpMesh& mesh);

/// Rolls the policy forward from E_0 with the control interpolated in E.
/// Sets `feasible = false` if the trajectory cannot be kept on the mesh.
Solution forward_rollout(const ConvexProblem& prob, const DpMesh& mesh);

/// make_mesh + backward_pass + forward_rollout, timed.
Solution solve_dp(const ConvexProblem& prob, const DpParams& params = {});

}  // namespace hevmpc
