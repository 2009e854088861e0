// Convex energy-management program in battery-power coordinates:
//
//   min  sum_{k in P} f_k(P_drv,k - g_k^-1(P_b,k))
//   s.t. E_{k+1} = E_k - P_b,k,  E_lo <= E_{k+1} <= E_hi,  P_b_lo,k <= P_b,k <= P_b_hi,k
//
// Non-hybrid steps have P_b_lo == P_b_hi and contribute only constant idle fuel.

#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hevmpc/drive_cycle.hpp"
#include "hevmpc/vehicle_model.hpp"

namespace hevmpc {

/// Value and first two derivatives of a scalar function at a point.
struct CostEval {
    double value{0.0};
    double d1{0.0};
    double d2{0.0};
};

/// f(P_drv - g^-1(P_b)) for one hybrid step, with the coefficients of the
/// inverse battery map folded in at build time.
class ComposedCost {
public:
    ComposedCost() = default;
    ComposedCost(double demand, const StepQuadratics& q, const BatteryParams& batt);

    /// No domain checks; callers keep P_b inside the step bounds.
    [[nodiscard]] CostEval eval(double pb) const noexcept;
    [[nodiscard]] double value(double pb) const noexcept;
    /// g^-1(P_b).
    [[nodiscard]] double motor_power(double pb) const noexcept;

private:
    double demand_{0.0};
    Quadratic engine_;
    double r_over_v2_{0.0};   // R / V^2
    double inv_b2_{0.0};      // 1 / b2
    double b0_{0.0};
    double half_{0.0};        // b1 / 2 b2
};

struct ProblemStep {
    StepClass step_class{StepClass::Braking};
    double demand{0.0};
    double omega{0.0};
    StepQuadratics quadratics;
    StepBounds bounds;
    double idle_fuel{0.0};  // fuel power charged on non-hybrid steps
};

/// Overrides for the state-of-charge window; unset fields come from the scenario/model.
struct EnergyLimits {
    std::optional<double> initial;
    std::optional<double> lo;
    std::optional<double> hi;
};

class ConvexProblem {
public:
    [[nodiscard]] std::size_t horizon() const noexcept { return steps_.size(); }
    [[nodiscard]] const std::vector<ProblemStep>& steps() const noexcept { return steps_; }
    [[nodiscard]] const ProblemStep& step(std::size_t k) const { return steps_.at(k); }
    [[nodiscard]] bool is_hybrid(std::size_t k) const { return steps_[k].step_class == StepClass::Hybrid; }
    [[nodiscard]] const std::vector<std::size_t>& hybrid_steps() const noexcept { return hybrid_; }

    [[nodiscard]] const Eigen::VectorXd& pb_lo() const noexcept { return pb_lo_; }
    [[nodiscard]] const Eigen::VectorXd& pb_hi() const noexcept { return pb_hi_; }
    [[nodiscard]] double initial_energy() const noexcept { return e0_; }
    [[nodiscard]] double energy_lo() const noexcept { return e_lo_; }
    [[nodiscard]] double energy_hi() const noexcept { return e_hi_; }
    [[nodiscard]] double full_energy() const noexcept { return battery_.full_energy(); }
    [[nodiscard]] const BatteryParams& battery() const noexcept { return battery_; }

    /// Composed cost of hybrid step k with domain checks (DomainError outside
    /// the step bounds or on a non-hybrid step).
    [[nodiscard]] CostEval composed_cost(std::size_t k, double pb) const;
    [[nodiscard]] const ComposedCost& cost(std::size_t k) const { return costs_[k]; }

    /// E_0..E_N from E_{k+1} = E_k - P_b,k.
    [[nodiscard]] Eigen::VectorXd energy_trajectory(const Eigen::VectorXd& pb) const;
    /// Optimized objective: fuel summed over hybrid steps.
    [[nodiscard]] double objective(const Eigen::VectorXd& pb) const;
    /// Per-step fuel power, idle fuel included on non-hybrid steps.
    [[nodiscard]] Eigen::VectorXd fuel_vector(const Eigen::VectorXd& pb) const;

    friend ConvexProblem build_problem(const DriveScenario&, const PowertrainModel&,
                                       const EnergyLimits&);

private:
    std::vector<ProblemStep> steps_;
    std::vector<ComposedCost> costs_;  // indexed by step; default-constructed off P
    std::vector<std::size_t> hybrid_;
    Eigen::VectorXd pb_lo_;
    Eigen::VectorXd pb_hi_;
    double e0_{0.0};
    double e_lo_{0.0};
    double e_hi_{0.0};
    BatteryParams battery_;
};

/// Throws InfeasibleStep naming the first step whose envelope is empty.
ConvexProblem build_problem(const DriveScenario& scenario, const PowertrainModel& model,
                            const EnergyLimits& limits = {});

struct AuditReport {
    double max_soc_violation_pct{0.0};  // % of full battery energy
    double max_bound_violation{0.0};    // W, battery-power box
    double dynamics_residual{0.0};      // max |E_{k+1} - E_k + P_b,k|, J
};

struct Solution {
    std::string solver;
    Eigen::VectorXd battery_power;  // N
    Eigen::VectorXd engine_power;   // N
    Eigen::VectorXd motor_power;    // N
    Eigen::VectorXd energy;         // N + 1, E_0 first
    Eigen::VectorXd fuel;           // N, fuel power per step
    double objective{0.0};          // fuel over hybrid steps, J
    double total_fuel{0.0};         // objective + idle fuel, J
    bool converged{true};
    bool feasible{true};
    std::size_t iterations{0};
    double solve_time_s{0.0};  // excludes one-off setup
    double setup_time_s{0.0};
    std::vector<double> r_history;
    std::vector<double> s_history;
    std::vector<double> objective_history;  // filled only when tracing is requested
    std::map<std::string, double> params;
    AuditReport audit;
};

/// Fills a Solution from a battery-power vector: engine power recovered as
/// P_drv - g^-1(P_b) on hybrid steps, idle power elsewhere.
Solution solution_from_battery_power(const ConvexProblem& prob, const Eigen::VectorXd& pb);

/// The P_b = P_b_hi trajectory, if it respects the SOC window at every step.
std::optional<Solution> trivial_solution(const ConvexProblem& prob);

/// sum_k |a_k - b_k|; throws std::invalid_argument on length mismatch.
double fuel_metric(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

AuditReport audit(const Solution& sol, const ConvexProblem& prob);

}  // namespace hevmpc
