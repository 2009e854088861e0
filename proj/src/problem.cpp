#include "hevmpc/problem.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "hevmpc/errors.hpp"

namespace hevmpc {

// ---------------------------------------------------------------------------
// ComposedCost
//
// With x = g^-1(P_b) = -b1/2b2 + sqrt(q(P_b)),
//   q(P_b)  = (P_b - R P_b^2/V^2 - b0)/b2 + (b1/2b2)^2
//   q'      = (1 - 2 R P_b / V^2)/b2,   q'' = -2R/(V^2 b2)
//   x'      = q'/(2 sqrt q),            x'' = q''/(2 sqrt q) - q'^2/(4 q^1.5)
// and c(P_b) = f(P_drv - x):  c' = -f'(u) x',  c'' = f''(u) x'^2 - f'(u) x''.

ComposedCost::ComposedCost(double demand, const StepQuadratics& q, const BatteryParams& batt)
    : demand_(demand),
      engine_(q.engine),
      r_over_v2_(batt.resistance / (batt.open_circuit_voltage * batt.open_circuit_voltage)),
      inv_b2_(1.0 / q.motor.c2),
      b0_(q.motor.c0),
      half_(q.motor.c1 / (2.0 * q.motor.c2)) {}

double ComposedCost::motor_power(double pb) const noexcept {
    const double shifted = (pb - r_over_v2_ * pb * pb - b0_) * inv_b2_;
    const double root = std::sqrt(std::max(shifted + half_ * half_, 0.0));
    return half_ > 0.0 ? shifted / (root + half_) : root - half_;
}

double ComposedCost::value(double pb) const noexcept { return engine_(demand_ - motor_power(pb)); }

CostEval ComposedCost::eval(double pb) const noexcept {
    const double shifted = (pb - r_over_v2_ * pb * pb - b0_) * inv_b2_;
    const double rad = shifted + half_ * half_;
    const double root = std::sqrt(std::max(rad, 0.0));
    const double x = half_ > 0.0 ? shifted / (root + half_) : root - half_;
    const double dq = (1.0 - 2.0 * r_over_v2_ * pb) * inv_b2_;
    const double d2q = -2.0 * r_over_v2_ * inv_b2_;
    const double dx = dq / (2.0 * root);
    const double d2x = d2q / (2.0 * root) - dq * dq / (4.0 * rad * root);

    const double u = demand_ - x;
    const double df = engine_.derivative(u);
    const double d2f = 2.0 * engine_.c2;
    return {engine_(u), -df * dx, d2f * dx * dx - df * d2x};
}

// ---------------------------------------------------------------------------
// ConvexProblem

ConvexProblem build_problem(const DriveScenario& scenario, const PowertrainModel& model,
                            const EnergyLimits& limits) {
    model.validate();
    const std::size_t n = scenario.horizon();
    if (n == 0) throw std::invalid_argument("empty scenario");

    ConvexProblem p;
    p.battery_ = model.battery;
    p.e0_ = limits.initial.value_or(scenario.initial_energy);
    p.e_lo_ = limits.lo.value_or(model.battery.energy_lo);
    p.e_hi_ = limits.hi.value_or(model.battery.energy_hi);
    if (!(p.e_lo_ <= p.e0_ && p.e0_ <= p.e_hi_))
        throw std::invalid_argument("initial energy outside [energy_lo, energy_hi]");

    p.steps_.resize(n);
    p.costs_.resize(n);
    p.pb_lo_.resize(static_cast<Eigen::Index>(n));
    p.pb_hi_.resize(static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k < n; ++k) {
        auto& st = p.steps_[k];
        st.step_class = scenario.step_class[k];
        st.demand = scenario.demand[k];
        st.omega = scenario.omega[k];
        st.quadratics.engine = interp_coeffs(scenario.omega_eng[k], model.engine_map);
        st.quadratics.motor = interp_coeffs(scenario.omega_em[k], model.motor_map);

        StepInput in{k, st.demand, st.omega, st.step_class, st.quadratics};
        st.bounds = restricted_bounds(in, model);
        p.pb_lo_[static_cast<Eigen::Index>(k)] = st.bounds.battery_lo;
        p.pb_hi_[static_cast<Eigen::Index>(k)] = st.bounds.battery_hi;

        if (st.step_class == StepClass::Hybrid) {
            p.hybrid_.push_back(k);
            p.costs_[k] = ComposedCost(st.demand, st.quadratics, model.battery);
        } else {
            st.idle_fuel = model.idle_fuel ? fuel_power(st.bounds.engine_lo, st.quadratics) : 0.0;
        }
    }
    return p;
}

CostEval ConvexProblem::composed_cost(std::size_t k, double pb) const {
    if (k >= horizon()) throw std::out_of_range("step index out of range");
    if (!is_hybrid(k))
        throw DomainError("step " + std::to_string(k) + " is not a hybrid step");
    const auto i = static_cast<Eigen::Index>(k);
    const double slack = 1e-12 * std::max(1.0, std::abs(pb_hi_[i]) + std::abs(pb_lo_[i]));
    if (pb < pb_lo_[i] - slack || pb > pb_hi_[i] + slack) {
        std::ostringstream os;
        os << "step " << k << ": battery power " << pb << " W outside [" << pb_lo_[i] << ", "
           << pb_hi_[i] << "]";
        throw DomainError(os.str());
    }
    return costs_[k].eval(pb);
}

Eigen::VectorXd ConvexProblem::energy_trajectory(const Eigen::VectorXd& pb) const {
    Eigen::VectorXd e(pb.size() + 1);
    e[0] = e0_;
    for (Eigen::Index k = 0; k < pb.size(); ++k) e[k + 1] = e[k] - pb[k];
    return e;
}

double ConvexProblem::objective(const Eigen::VectorXd& pb) const {
    double total = 0.0;
    for (auto k : hybrid_) total += costs_[k].value(pb[static_cast<Eigen::Index>(k)]);
    return total;
}

Eigen::VectorXd ConvexProblem::fuel_vector(const Eigen::VectorXd& pb) const {
    Eigen::VectorXd fuel(static_cast<Eigen::Index>(horizon()));
    for (std::size_t k = 0; k < horizon(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        fuel[i] = is_hybrid(k) ? costs_[k].value(pb[i]) : steps_[k].idle_fuel;
    }
    return fuel;
}

// ---------------------------------------------------------------------------
// Solutions

Solution solution_from_battery_power(const ConvexProblem& prob, const Eigen::VectorXd& pb) {
    const auto n = static_cast<Eigen::Index>(prob.horizon());
    if (pb.size() != n) throw std::invalid_argument("battery power vector has wrong length");
    Solution sol;
    sol.battery_power = pb;
    sol.engine_power.resize(n);
    sol.motor_power.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        const auto& st = prob.step(k);
        if (prob.is_hybrid(k)) {
            sol.motor_power[i] = prob.cost(k).motor_power(pb[i]);
            sol.engine_power[i] = st.demand - sol.motor_power[i];
        } else {
            sol.motor_power[i] = st.bounds.motor_lo_plus;
            sol.engine_power[i] = st.bounds.engine_lo;
        }
    }
    sol.energy = prob.energy_trajectory(pb);
    sol.fuel = prob.fuel_vector(pb);
    sol.objective = prob.objective(pb);
    sol.total_fuel = sol.fuel.sum();
    return sol;
}

std::optional<Solution> trivial_solution(const ConvexProblem& prob) {
    double e = prob.initial_energy();
    const auto& hi = prob.pb_hi();
    for (Eigen::Index k = 0; k < hi.size(); ++k) {
        e -= hi[k];
        if (e < prob.energy_lo() || e > prob.energy_hi()) return std::nullopt;
    }
    Solution sol = solution_from_battery_power(prob, hi);
    sol.solver = "trivial";
    sol.audit = audit(sol, prob);
    return sol;
}

double fuel_metric(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("fuel vectors differ in length (" + std::to_string(a.size()) +
                                    " vs " + std::to_string(b.size()) + ")");
    return (a - b).cwiseAbs().sum();
}

AuditReport audit(const Solution& sol, const ConvexProblem& prob) {
    AuditReport r;
    const auto& e = sol.energy;
    double worst_soc = 0.0;
    for (Eigen::Index k = 1; k < e.size(); ++k)
        worst_soc = std::max({worst_soc, prob.energy_lo() - e[k], e[k] - prob.energy_hi()});
    r.max_soc_violation_pct = 100.0 * worst_soc / prob.full_energy();

    const auto& pb = sol.battery_power;
    for (Eigen::Index k = 0; k < pb.size(); ++k) {
        r.max_bound_violation =
            std::max({r.max_bound_violation, prob.pb_lo()[k] - pb[k], pb[k] - prob.pb_hi()[k]});
        if (k + 1 < e.size())
            r.dynamics_residual = std::max(r.dynamics_residual, std::abs(e[k + 1] - e[k] + pb[k]));
    }
    return r;
}

}  // namespace hevmpc
