#include "hevmpc/admm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "hevmpc/errors.hpp"

namespace hevmpc {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Eigen::VectorXd project_energy(const Eigen::VectorXd& x, const ConvexProblem& prob) {
    return x.cwiseMax(prob.energy_lo()).cwiseMin(prob.energy_hi());
}

}  // namespace

void AdmmParams::validate() const {
    if (!(rho1 > 0.0 && rho2 > 0.0)) throw std::invalid_argument("rho1 and rho2 must be positive");
    if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
    if (!(backtrack_shrink > 0.0 && backtrack_shrink < 1.0))
        throw std::invalid_argument("backtrack_shrink must lie in (0, 1)");
}

Eigen::VectorXd cumulative_sum(const Eigen::VectorXd& x) {
    Eigen::VectorXd y(x.size());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) y[i] = (acc += x[i]);
    return y;
}

Eigen::VectorXd reverse_cumulative_sum(const Eigen::VectorXd& x) {
    Eigen::VectorXd y(x.size());
    double acc = 0.0;
    for (Eigen::Index i = x.size() - 1; i >= 0; --i) y[i] = (acc += x[i]);
    return y;
}

// ---------------------------------------------------------------------------
// ZetaSystem

ZetaSystem::ZetaSystem(std::size_t n, double rho1, double rho2) : rho1_(rho1), rho2_(rho2) {
    if (n == 0) throw std::invalid_argument("ZetaSystem needs n >= 1");
    if (!(rho1 > 0.0 && rho2 >= 0.0)) throw std::invalid_argument("ZetaSystem needs rho1 > 0, rho2 >= 0");
    const auto t0 = Clock::now();
    diag_.resize(n);
    lower_.assign(n, 0.0);
    // T = rho1 D'D + rho2 I: diagonal 2 rho1 + rho2 (rho1 + rho2 in the last row),
    // off-diagonal -rho1.
    for (std::size_t i = 0; i < n; ++i) {
        const double t_ii = (i + 1 < n ? 2.0 * rho1 : rho1) + rho2;
        if (i == 0) {
            diag_[i] = t_ii;
        } else {
            lower_[i] = -rho1 / diag_[i - 1];
            diag_[i] = t_ii - lower_[i] * lower_[i] * diag_[i - 1];
        }
        if (!(diag_[i] > 0.0))
            throw NumericalError("zeta system factorization failed at row " + std::to_string(i));
    }
    build_seconds_ = seconds_since(t0);
}

Eigen::VectorXd ZetaSystem::solve(const Eigen::VectorXd& rhs) const {
    const auto n = static_cast<Eigen::Index>(diag_.size());
    if (rhs.size() != n) throw std::invalid_argument("ZetaSystem::solve: size mismatch");
    // y = D' b
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i + 1 < n; ++i) y[i] = rhs[i] - rhs[i + 1];
    y[n - 1] = rhs[n - 1];
    // T z = y via L D L'
    for (Eigen::Index i = 1; i < n; ++i) y[i] -= lower_[static_cast<std::size_t>(i)] * y[i - 1];
    for (Eigen::Index i = 0; i < n; ++i) y[i] /= diag_[static_cast<std::size_t>(i)];
    for (Eigen::Index i = n - 2; i >= 0; --i) y[i] -= lower_[static_cast<std::size_t>(i + 1)] * y[i + 1];
    // zeta = D z
    Eigen::VectorXd z(n);
    z[0] = y[0];
    for (Eigen::Index i = 1; i < n; ++i) z[i] = y[i] - y[i - 1];
    return z;
}

Eigen::VectorXd ZetaSystem::apply(const Eigen::VectorXd& z) const {
    return rho1_ * z + rho2_ * reverse_cumulative_sum(cumulative_sum(z));
}

std::shared_ptr<const ZetaSystem> cached_zeta_system(std::size_t n, double rho1, double rho2) {
    static std::mutex mutex;
    static std::map<std::tuple<std::size_t, double, double>, std::shared_ptr<const ZetaSystem>> cache;
    const std::lock_guard lock(mutex);
    auto& slot = cache[{n, rho1, rho2}];
    if (!slot) slot = std::make_shared<const ZetaSystem>(n, rho1, rho2);
    return slot;
}

// ---------------------------------------------------------------------------
// Iteration pieces

AdmmState initialize(const ConvexProblem& prob) {
    const auto n = static_cast<Eigen::Index>(prob.horizon());
    AdmmState s;
    s.pb = prob.pb_hi();
    s.zeta = -s.pb;
    const Eigen::VectorXd predicted = Eigen::VectorXd::Constant(n, prob.initial_energy()) + cumulative_sum(s.zeta);
    s.energy = project_energy(predicted, prob);
    s.lambda = predicted - s.energy;
    s.nu = Eigen::VectorXd::Zero(n);
    return s;
}

double pb_update(std::size_t k, const AdmmState& state, const ConvexProblem& prob,
                 const AdmmParams& params, double warm) {
    const auto i = static_cast<Eigen::Index>(k);
    const double lo = prob.pb_lo()[i];
    const double hi = prob.pb_hi()[i];
    if (!prob.is_hybrid(k) || hi <= lo) return lo;

    const auto& cost = prob.cost(k);
    const double rho = params.rho1;
    const double target = -(state.zeta[i] + state.nu[i]);
    const double range = hi - lo;
    // g^-1 has a square-root singularity at the motor vertex; stay strictly inside.
    const double a = lo + 1e-9 * range;
    const double b = hi - 1e-9 * range;

    auto merit = [&](double x) { return cost.value(x) + 0.5 * rho * (x - target) * (x - target); };

    // 1-D convex: an iterate on an end with the gradient pointing outward is optimal.
    double x = std::clamp(warm, a, b);
    const double step_tol = params.newton_tol * std::max(range, 1.0);
    for (std::size_t it = 0; it < params.newton_max_iter; ++it) {
        const CostEval e = cost.eval(x);
        const double g = e.d1 + rho * (x - target);
        const double h = e.d2 + rho;
        if (!std::isfinite(g) || !std::isfinite(h) || !std::isfinite(e.value)) {
            std::ostringstream os;
            os << "Newton produced a non-finite value at step " << k << ": P_b=" << x
               << " f=" << e.value << " f'=" << e.d1 << " f''=" << e.d2 << " zeta=" << state.zeta[i]
               << " nu=" << state.nu[i] << " bounds=[" << lo << ", " << hi << "]";
            throw NumericalError(os.str());
        }
        if (x >= b && g <= 0.0) return hi;
        if (x <= a && g >= 0.0) return lo;
        if (std::abs(g) <= params.newton_tol * (1.0 + std::abs(e.d1))) break;

        const double dir = -g / h;
        if (std::abs(dir) <= step_tol) {
            x = std::clamp(x + dir, a, b);
            break;
        }
        const double phi0 = e.value + 0.5 * rho * (x - target) * (x - target);
        double alpha = 1.0;
        double next = std::clamp(x + dir, a, b);
        while (alpha > 1e-12) {
            next = std::clamp(x + alpha * dir, a, b);
            if (merit(next) <= phi0 + params.backtrack_decrease * g * (next - x)) break;
            alpha *= params.backtrack_shrink;
        }
        const double moved = std::abs(next - x);
        x = next;
        if (moved <= step_tol) break;
    }
    return std::clamp(x, lo, hi);
}

Eigen::VectorXd zeta_update(const AdmmState& state, const ConvexProblem& prob,
                            const AdmmParams& params, const ZetaSystem& system) {
    const auto n = state.pb.size();
    const Eigen::VectorXd gap =
        Eigen::VectorXd::Constant(n, prob.initial_energy()) - state.energy + state.lambda;
    const Eigen::VectorXd rhs =
        -params.rho1 * (state.pb + state.nu) - params.rho2 * reverse_cumulative_sum(gap);
    return system.solve(rhs);
}

void energy_dual_update(AdmmState& state, const ConvexProblem& prob) {
    const auto n = state.zeta.size();
    const Eigen::VectorXd predicted =
        Eigen::VectorXd::Constant(n, prob.initial_energy()) + cumulative_sum(state.zeta);
    state.energy = project_energy(predicted + state.lambda, prob);
    state.lambda += predicted - state.energy;
    state.nu += state.pb + state.zeta;
}

ResidualNorms residuals(const AdmmState& prev, const AdmmState& next, const ConvexProblem& prob,
                        const AdmmParams& params) {
    const auto n = next.zeta.size();
    const Eigen::VectorXd dyn = Eigen::VectorXd::Constant(n, prob.initial_energy()) +
                                cumulative_sum(next.zeta) - next.energy;
    const double r = std::sqrt((next.pb + next.zeta).squaredNorm() + dyn.squaredNorm());

    const Eigen::VectorXd dz = prev.zeta - next.zeta;
    const Eigen::VectorXd de = prev.energy - next.energy;
    const Eigen::VectorXd lower = params.rho2 * (cumulative_sum(dz) - de);
    const double s = std::sqrt((params.rho1 * dz).squaredNorm() + lower.squaredNorm());
    return {r, s};
}

// ---------------------------------------------------------------------------
// Driver

Solution solve_admm(const ConvexProblem& prob, const AdmmParams& params) {
    params.validate();
    const auto t0 = Clock::now();

    if (params.use_fast_path) {
        if (auto fast = trivial_solution(prob)) {
            fast->solver = "admm";
            fast->iterations = 0;
            fast->converged = true;
            fast->solve_time_s = seconds_since(t0);
            fast->params = {{"rho1", params.rho1}, {"rho2", params.rho2}, {"epsilon", params.epsilon}};
            return *fast;
        }
    }

    const auto t_sys = Clock::now();
    const auto system = cached_zeta_system(prob.horizon(), params.rho1, params.rho2);
    const double lookup = seconds_since(t_sys);
    AdmmState state = initialize(prob);
    AdmmState prev;  // only zeta and energy are read by residuals()
    std::vector<double> r_history, s_history, objective_history;
    bool converged = false;

    while (state.iter < params.max_iter) {
        prev.zeta = state.zeta;
        prev.energy = state.energy;
        // pb_update reads zeta and nu only, so P_b can be overwritten in place.
        for (std::size_t k = 0; k < prob.horizon(); ++k) {
            const auto i = static_cast<Eigen::Index>(k);
            state.pb[i] = pb_update(k, state, prob, params, state.pb[i]);
        }
        state.zeta = zeta_update(state, prob, params, *system);
        energy_dual_update(state, prob);
        ++state.iter;

        const auto norms = residuals(prev, state, prob, params);
        r_history.push_back(norms.r);
        s_history.push_back(norms.s);
        if (params.record_objective) objective_history.push_back(prob.objective(state.pb));

        if (params.stop_on_residuals && norms.r <= params.epsilon && norms.s <= params.epsilon) {
            converged = true;
            break;
        }
    }
    state.r_norm = std::move(r_history);
    state.s_norm = std::move(s_history);
    const double elapsed = seconds_since(t0) - lookup;

    Solution sol = solution_from_battery_power(prob, state.pb);
    sol.solver = "admm";
    sol.iterations = state.iter;
    sol.converged = converged ||
                    (!params.stop_on_residuals && !state.r_norm.empty() &&
                     state.r_norm.back() <= params.epsilon && state.s_norm.back() <= params.epsilon);
    sol.solve_time_s = elapsed;
    sol.setup_time_s = system->build_seconds();
    sol.r_history = std::move(state.r_norm);
    sol.s_history = std::move(state.s_norm);
    sol.objective_history = std::move(objective_history);
    sol.params = {{"rho1", params.rho1}, {"rho2", params.rho2}, {"epsilon", params.epsilon}};
    sol.audit = audit(sol, prob);
    return sol;
}

}  // namespace hevmpc
