// ADMM for the battery-power program. The dynamics are split off through
// zeta = -P_b and E = Phi E0 + Psi zeta, where Phi is a column of ones and Psi
// the lower-triangular matrix of ones, giving
//
//   P_b    <- per-step prox of the composed cost (scalar Newton), projected
//   zeta   <- (rho1 I + rho2 Psi'Psi)^-1 [-rho1 (P_b + nu) - rho2 Psi'(Phi E0 - E + lambda)]
//   E      <- clip(Phi E0 + Psi zeta + lambda)
//   lambda <- lambda + Phi E0 + Psi zeta - E
//   nu     <- nu + P_b + zeta

#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <memory>
#include <vector>

#include "hevmpc/problem.hpp"

namespace hevmpc {

struct AdmmParams {
    double rho1{2.34e-4};  // 1/W
    double rho2{8.86e-9};  // 1/J
    double epsilon{1e5};   // absolute threshold on both residual norms
    std::size_t max_iter{5000};
    double newton_tol{1e-10};
    std::size_t newton_max_iter{50};
    double backtrack_shrink{0.5};
    double backtrack_decrease{1e-4};
    /// Return the P_b = P_b_hi solution without iterating when it is feasible.
    bool use_fast_path{true};
    /// When false, run exactly max_iter iterations (fixed-budget tuning runs).
    bool stop_on_residuals{true};
    /// Record the objective at every iteration.
    bool record_objective{false};

    void validate() const;
};

struct AdmmState {
    Eigen::VectorXd pb;
    Eigen::VectorXd zeta;
    Eigen::VectorXd energy;  // E_1..E_N
    Eigen::VectorXd lambda;
    Eigen::VectorXd nu;
    std::size_t iter{0};
    std::vector<double> r_norm;
    std::vector<double> s_norm;
};

/// Psi x: running sum.
Eigen::VectorXd cumulative_sum(const Eigen::VectorXd& x);
/// Psi' x: running sum from the end.
Eigen::VectorXd reverse_cumulative_sum(const Eigen::VectorXd& x);

/// Solver for (rho1 I + rho2 Psi'Psi) z = b.
///
/// Psi^-1 = D is the first-difference matrix, so
///   rho1 I + rho2 Psi'Psi = Psi' (rho1 D'D + rho2 I) Psi
/// and the inverse is D T^-1 D' with T = rho1 D'D + rho2 I tridiagonal SPD.
/// T is LDL'-factorized once; each solve is O(N).
class ZetaSystem {
public:
    ZetaSystem(std::size_t n, double rho1, double rho2);

    [[nodiscard]] Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
    /// (rho1 I + rho2 Psi'Psi) z, for checking solves.
    [[nodiscard]] Eigen::VectorXd apply(const Eigen::VectorXd& z) const;

    [[nodiscard]] std::size_t size() const noexcept { return diag_.size(); }
    [[nodiscard]] double build_seconds() const noexcept { return build_seconds_; }

private:
    double rho1_;
    double rho2_;
    std::vector<double> diag_;   // D of LDL'
    std::vector<double> lower_;  // subdiagonal of L
    double build_seconds_{0.0};
};

/// Shared factorization keyed by (n, rho1, rho2). Thread-safe.
std::shared_ptr<const ZetaSystem> cached_zeta_system(std::size_t n, double rho1, double rho2);

AdmmState initialize(const ConvexProblem& prob);

/// Box-constrained minimizer of c_k(P) + rho1/2 (P + zeta_k + nu_k)^2 for a
/// hybrid step; P_b_lo for other steps. `warm` seeds the Newton iteration.
double pb_update(std::size_t k, const AdmmState& state, const ConvexProblem& prob,
                 const AdmmParams& params, double warm);

Eigen::VectorXd zeta_update(const AdmmState& state, const ConvexProblem& prob,
                            const AdmmParams& params, const ZetaSystem& system);

/// E, lambda and nu updates from the state's current P_b and zeta.
void energy_dual_update(AdmmState& state, const ConvexProblem& prob);

struct ResidualNorms {
    double r{0.0};
    double s{0.0};
};

ResidualNorms residuals(const AdmmState& prev, const AdmmState& next, const ConvexProblem& prob,
                        const AdmmParams& params);

/// Full solve: fast path, then iterate to max(r, s) <= epsilon or max_iter.
/// Non-converged runs come back with `converged == false`.
Solution solve_admm(const ConvexProblem& prob, const AdmmParams& params = {});

}  // namespace hevmpc
