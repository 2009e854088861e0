// Benchmark harness: reference optimum, rho tuning grid, scenario sweeps and
// trajectory export. CSV schemas are listed next to each writer.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "hevmpc/admm.hpp"
#include "hevmpc/dp.hpp"
#include "hevmpc/drive_cycle.hpp"
#include "hevmpc/problem.hpp"

namespace hevmpc {

/// n values evenly spaced in log10 between lo and hi inclusive.
std::vector<double> logspace(double lo, double hi, std::size_t n);

/// FNV-1a over every number that defines the problem.
std::uint64_t problem_hash(const ConvexProblem& prob);

/// Hostname, hardware threads, compiler and build type, UTC timestamp.
nlohmann::json host_metadata();

/// DP reference solutions keyed by problem content and mesh size. With a
/// directory, entries persist as `ref-<hash>.json` next to a `.meta.json` sidecar.
class ReferenceCache {
public:
    explicit ReferenceCache(std::string dir = {});

    /// Cached or freshly computed DP solution at `energy_points`.
    Solution get(const ConvexProblem& prob, std::size_t energy_points = 1000,
                 std::optional<std::size_t> control_points = std::nullopt);

    [[nodiscard]] std::size_t computed() const noexcept { return computed_; }

private:
    std::string dir_;
    std::mutex mutex_;
    std::map<std::string, std::shared_ptr<const Solution>> memory_;
    std::size_t computed_{0};
};

struct ScenarioSpec {
    double theta_s{0.0};  // rad
    double mu{1.0};
    std::optional<double> initial_soc;

    /// Stable label, e.g. `theta+2.00deg_mu1.00`.
    [[nodiscard]] std::string id() const;
};

struct ExperimentConfig {
    std::vector<double> theta_s{0.0};  // rad
    std::vector<double> mu{1.0};
    std::vector<std::string> solvers{"admm", "dp"};
    std::vector<double> epsilon{1e5, 3.1623e5, 1e6};
    std::vector<std::size_t> energy_points{30, 60, 120};
    std::size_t np_ratio{10};  // N_P = N_E / np_ratio
    AdmmParams admm;           // rho1, rho2 and limits for sweep cells
    std::size_t reference_points{1000};
    std::size_t repeats{10};
    std::size_t jobs{1};
    bool timing_strict{false};
    std::uint64_t seed{0};  // execution order of cells

    void validate() const;
    [[nodiscard]] std::vector<ScenarioSpec> scenarios() const;
    [[nodiscard]] nlohmann::json to_json() const;
};

struct BenchRecord {
    std::string scenario_id;
    double theta_s_deg{0.0};
    double mu{1.0};
    std::string solver;
    std::string param_name;  // epsilon | energy_points
    double param_value{0.0};
    std::size_t repeats{0};
    double mean_time_s{0.0};
    double mean_setup_time_s{0.0};
    double J{0.0};
    double max_soc_violation_pct{0.0};
    bool converged{false};
    double objective{0.0};
    std::size_t iterations{0};
    std::string status{"ok"};
};

/// Every scenario x solver setting, each repeated `repeats` times. Timings
/// exclude reference computation and I/O. A failing cell is recorded with its
/// error in `status` and the sweep continues. Rows come back in canonical
/// order: scenario, then solver, then parameter.
std::vector<BenchRecord> run_sweep(const ExperimentConfig& config, const CycleData& cycle,
                                   const PowertrainModel& model, ReferenceCache& cache);

/// Header: scenario_id,theta_s_deg,mu,solver,param_name,param_value,repeats,
/// mean_time_s,mean_setup_time_s,J,max_soc_violation_pct,converged,objective,iterations,status
void write_sweep_csv(const std::string& path, const std::vector<BenchRecord>& rows);

struct RhoCell {
    double rho1{0.0};
    double rho2{0.0};
    double J{0.0};
    double objective{0.0};
    double max_soc_violation_pct{0.0};
    double r_norm{0.0};
    double s_norm{0.0};
    double time_s{0.0};
};

/// A fixed budget of `iterations` ADMM steps (no residual stop) per grid point,
/// scored with J against `reference`. Row-major over rho1 then rho2.
std::vector<RhoCell> tune_rho(const ConvexProblem& prob, const Solution& reference,
                              const std::vector<double>& rho1, const std::vector<double>& rho2,
                              std::size_t iterations = 300, std::size_t jobs = 1);

/// Index of the smallest finite J; ties go to the first.
std::size_t argmin_cell(const std::vector<RhoCell>& cells);

/// Header: rho1,rho2,J,objective,max_soc_violation_pct,r_norm,s_norm,time_s,is_min
void write_rho_csv(const std::string& path, const std::vector<RhoCell>& cells);

/// Header: k,E_opt,E_admm,E_dp,soc_opt_pct,soc_admm_pct,soc_dp_pct,soc_lo_pct,soc_hi_pct
/// One row per state, k = 0..N.
void write_trajectory_csv(const std::string& path, const ConvexProblem& prob, const Solution& opt,
                          const Solution& admm, const Solution& dp);

}  // namespace hevmpc
