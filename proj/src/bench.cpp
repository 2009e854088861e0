#include "hevmpc/bench.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "hevmpc/io.hpp"

namespace hevmpc {

namespace {

constexpr double kRadToDeg = 180.0 / 3.14159265358979323846;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

class Fnv1a {
public:
    void add(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 1099511628211ULL;
        }
    }
    void add(double x) { add(&x, sizeof x); }
    void add(std::uint64_t x) { add(&x, sizeof x); }
    void add(const Quadratic& q) {
        add(q.c2);
        add(q.c1);
        add(q.c0);
    }
    [[nodiscard]] std::uint64_t value() const noexcept { return h_; }

private:
    std::uint64_t h_{14695981039346656037ULL};
};

std::string hex(std::uint64_t x) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << x;
    return os.str();
}

/// Runs body(i) for i in [0, n) on up to `jobs` threads.
template <class F>
void parallel_for(std::size_t n, std::size_t jobs, F body) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1)) < n;) body(i);
        });
    for (auto& th : pool) th.join();
}

std::ofstream open_csv(const std::string& path) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    return out;
}

struct Cell {
    std::size_t scenario;
    std::string solver;
    double value;
};

}  // namespace

std::vector<double> logspace(double lo, double hi, std::size_t n) {
    if (!(lo > 0.0 && hi > 0.0)) throw std::invalid_argument("logspace needs positive end points");
    if (n == 0) throw std::invalid_argument("logspace needs at least one point");
    if (n == 1) return {lo};
    const double a = std::log10(lo);
    const double b = std::log10(hi);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
    out.front() = lo;
    out.back() = hi;
    return out;
}

std::uint64_t problem_hash(const ConvexProblem& prob) {
    Fnv1a h;
    h.add(static_cast<std::uint64_t>(prob.horizon()));
    h.add(prob.initial_energy());
    h.add(prob.energy_lo());
    h.add(prob.energy_hi());
    h.add(prob.battery().open_circuit_voltage);
    h.add(prob.battery().resistance);
    h.add(prob.battery().capacity_ah);
    for (const auto& st : prob.steps()) {
        h.add(static_cast<std::uint64_t>(st.step_class));
        h.add(st.demand);
        h.add(st.omega);
        h.add(st.quadratics.engine);
        h.add(st.quadratics.motor);
        h.add(st.bounds.engine_lo);
        h.add(st.bounds.engine_hi);
        h.add(st.bounds.engine_lo_plus);
        h.add(st.bounds.motor_lo_plus);
        h.add(st.bounds.battery_lo);
        h.add(st.bounds.battery_hi);
        h.add(st.idle_fuel);
    }
    return h.value();
}

nlohmann::json host_metadata() {
    char host[256] = {};
    if (gethostname(host, sizeof host - 1) != 0) host[0] = '\0';
    const std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
#ifdef NDEBUG
    const char* build = "release";
#else
    const char* build = "debug";
#endif
    return {{"hostname", host},
            {"hardware_threads", std::thread::hardware_concurrency()},
            {"compiler", __VERSION__},
            {"build", build},
            {"timestamp_utc", stamp}};
}

// ---------------------------------------------------------------------------
// Reference cache

ReferenceCache::ReferenceCache(std::string dir) : dir_(std::move(dir)) {
    if (!dir_.empty()) std::filesystem::create_directories(dir_);
}

Solution ReferenceCache::get(const ConvexProblem& prob, std::size_t energy_points,
                             std::optional<std::size_t> control_points) {
    DpParams params{energy_points, control_points};
    Fnv1a h;
    h.add(problem_hash(prob));
    h.add(static_cast<std::uint64_t>(energy_points));
    h.add(static_cast<std::uint64_t>(params.resolved_control_points()));
    const std::string key = hex(h.value());

    {
        const std::lock_guard lock(mutex_);
        if (auto it = memory_.find(key); it != memory_.end()) return *it->second;
    }

    const auto file = dir_.empty() ? std::filesystem::path()
                                   : std::filesystem::path(dir_) / ("ref-" + key + ".json");
    std::shared_ptr<const Solution> sol;
    if (!dir_.empty() && std::filesystem::exists(file)) {
        sol = std::make_shared<const Solution>(solution_from_json(read_json(file.string())));
    } else {
        sol = std::make_shared<const Solution>(solve_dp(prob, params));
        if (!dir_.empty()) {
            write_json(file.string(), solution_to_json(*sol));
            auto meta = file;
            meta.replace_extension(".meta.json");
            write_json(meta.string(), {{"key", key},
                                       {"energy_points", energy_points},
                                       {"control_points", params.resolved_control_points()},
                                       {"horizon", prob.horizon()},
                                       {"host", host_metadata()}});
        }
        const std::lock_guard lock(mutex_);
        ++computed_;
    }
    const std::lock_guard lock(mutex_);
    memory_.emplace(key, sol);
    return *sol;
}

// ---------------------------------------------------------------------------
// Experiment configuration

std::string ScenarioSpec::id() const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "theta%+.2fdeg_mu%.2f", theta_s * kRadToDeg, mu);
    std::string s(buf);
    if (initial_soc) {
        std::snprintf(buf, sizeof buf, "_soc%.3f", *initial_soc);
        s += buf;
    }
    return s;
}

void ExperimentConfig::validate() const {
    if (theta_s.empty() || mu.empty()) throw std::invalid_argument("scenario grids must be non-empty");
    if (solvers.empty()) throw std::invalid_argument("no solvers selected");
    for (const auto& s : solvers)
        if (s != "admm" && s != "dp") throw std::invalid_argument("unknown solver '" + s + "'");
    const bool use_admm = std::count(solvers.begin(), solvers.end(), "admm") > 0;
    const bool use_dp = std::count(solvers.begin(), solvers.end(), "dp") > 0;
    if (use_admm && epsilon.empty()) throw std::invalid_argument("epsilon grid is empty");
    if (use_dp && energy_points.empty()) throw std::invalid_argument("N_E grid is empty");
    for (double e : epsilon)
        if (!(e > 0.0)) throw std::invalid_argument("epsilon values must be positive");
    for (auto n : energy_points)
        if (n < 2) throw std::invalid_argument("N_E values must be at least 2");
    for (double m : mu)
        if (!(m > 0.0 && m <= 1.0)) throw std::invalid_argument("mu values must lie in (0, 1]");
    if (np_ratio == 0) throw std::invalid_argument("np_ratio must be positive");
    if (repeats == 0) throw std::invalid_argument("repeats must be at least 1");
    if (jobs == 0) throw std::invalid_argument("jobs must be at least 1");
    admm.validate();
}

std::vector<ScenarioSpec> ExperimentConfig::scenarios() const {
    std::vector<ScenarioSpec> out;
    for (double th : theta_s)
        for (double m : mu) out.push_back({th, m, std::nullopt});
    return out;
}

nlohmann::json ExperimentConfig::to_json() const {
    std::vector<double> theta_deg;
    for (double th : theta_s) theta_deg.push_back(th * kRadToDeg);
    return {{"theta_s_deg", theta_deg},
            {"mu", mu},
            {"solvers", solvers},
            {"epsilon", epsilon},
            {"energy_points", energy_points},
            {"np_ratio", np_ratio},
            {"rho1", admm.rho1},
            {"rho2", admm.rho2},
            {"max_iter", admm.max_iter},
            {"reference_points", reference_points},
            {"repeats", repeats},
            {"jobs", jobs},
            {"timing_strict", timing_strict},
            {"seed", seed}};
}

// ---------------------------------------------------------------------------
// Sweep

std::vector<BenchRecord> run_sweep(const ExperimentConfig& config, const CycleData& cycle,
                                   const PowertrainModel& model, ReferenceCache& cache) {
    config.validate();
    const auto specs = config.scenarios();

    // Problems and references first; neither is part of any timing.
    std::vector<std::optional<ConvexProblem>> problems(specs.size());
    std::vector<std::optional<Solution>> refs(specs.size());
    std::vector<std::string> setup_error(specs.size());
    parallel_for(specs.size(), config.jobs, [&](std::size_t i) {
        try {
            ScenarioOptions o{specs[i].theta_s, specs[i].mu, specs[i].initial_soc};
            problems[i] = build_problem(make_scenario(cycle, o, model), model);
            refs[i] = cache.get(*problems[i], config.reference_points);
        } catch (const std::exception& e) {
            setup_error[i] = e.what();
        }
    });

    std::vector<Cell> cells;
    for (std::size_t i = 0; i < specs.size(); ++i)
        for (const auto& solver : config.solvers) {
            if (solver == "admm")
                for (double e : config.epsilon) cells.push_back({i, solver, e});
            else
                for (auto n : config.energy_points) cells.push_back({i, solver, static_cast<double>(n)});
        }

    std::vector<BenchRecord> rows(cells.size());
    std::vector<std::size_t> order(cells.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(config.seed);
    std::shuffle(order.begin(), order.end(), rng);

    auto run_cell = [&](std::size_t slot) {
        const std::size_t c = order[slot];
        const Cell& cell = cells[c];
        const auto& spec = specs[cell.scenario];
        BenchRecord& r = rows[c];
        r.scenario_id = spec.id();
        r.theta_s_deg = spec.theta_s * kRadToDeg;
        r.mu = spec.mu;
        r.solver = cell.solver;
        r.param_name = cell.solver == "admm" ? "epsilon" : "energy_points";
        r.param_value = cell.value;
        r.J = kNaN;
        r.objective = kNaN;
        r.max_soc_violation_pct = kNaN;
        if (!setup_error[cell.scenario].empty()) {
            r.status = "error: " + setup_error[cell.scenario];
            return;
        }
        const auto& prob = *problems[cell.scenario];
        try {
            double total = 0.0;
            double setup = 0.0;
            Solution sol;
            for (std::size_t rep = 0; rep < config.repeats; ++rep) {
                if (cell.solver == "admm") {
                    AdmmParams p = config.admm;
                    p.epsilon = cell.value;
                    sol = solve_admm(prob, p);
                } else {
                    const auto ne = static_cast<std::size_t>(cell.value);
                    sol = solve_dp(prob, DpParams{ne, std::max<std::size_t>(1, ne / config.np_ratio)});
                }
                total += sol.solve_time_s;
                setup += sol.setup_time_s;
            }
            const auto reps = static_cast<double>(config.repeats);
            r.repeats = config.repeats;
            r.mean_time_s = total / reps;
            r.mean_setup_time_s = setup / reps;
            r.J = fuel_metric(sol.fuel, refs[cell.scenario]->fuel);
            r.max_soc_violation_pct = sol.audit.max_soc_violation_pct;
            r.converged = sol.converged && sol.feasible;
            r.objective = sol.objective;
            r.iterations = sol.iterations;
        } catch (const std::exception& e) {
            r.status = std::string("error: ") + e.what();
        }
    };
    parallel_for(cells.size(), config.timing_strict ? 1 : config.jobs, run_cell);
    return rows;
}

void write_sweep_csv(const std::string& path, const std::vector<BenchRecord>& rows) {
    auto out = open_csv(path);
    out << "scenario_id,theta_s_deg,mu,solver,param_name,param_value,repeats,mean_time_s,"
           "mean_setup_time_s,J,max_soc_violation_pct,converged,objective,iterations,status\n";
    for (const auto& r : rows) {
        std::string status = r.status;
        std::replace(status.begin(), status.end(), ',', ';');
        std::replace(status.begin(), status.end(), '\n', ' ');
        out << r.scenario_id << ',' << r.theta_s_deg << ',' << r.mu << ',' << r.solver << ','
            << r.param_name << ',' << r.param_value << ',' << r.repeats << ',' << r.mean_time_s << ','
            << r.mean_setup_time_s << ',' << r.J << ',' << r.max_soc_violation_pct << ','
            << (r.converged ? 1 : 0) << ',' << r.objective << ',' << r.iterations << ',' << status << '\n';
    }
}

// ---------------------------------------------------------------------------
// Rho tuning

std::vector<RhoCell> tune_rho(const ConvexProblem& prob, const Solution& reference,
                              const std::vector<double>& rho1, const std::vector<double>& rho2,
                              std::size_t iterations, std::size_t jobs) {
    if (rho1.empty() || rho2.empty()) throw std::invalid_argument("rho grids must be non-empty");
    if (reference.fuel.size() != static_cast<Eigen::Index>(prob.horizon()))
        throw std::invalid_argument("reference solution does not match the problem horizon");
    std::vector<RhoCell> cells(rho1.size() * rho2.size());
    parallel_for(cells.size(), jobs, [&](std::size_t c) {
        RhoCell& cell = cells[c];
        cell.rho1 = rho1[c / rho2.size()];
        cell.rho2 = rho2[c % rho2.size()];
        AdmmParams p;
        p.rho1 = cell.rho1;
        p.rho2 = cell.rho2;
        p.max_iter = iterations;
        p.stop_on_residuals = false;
        try {
            const Solution sol = solve_admm(prob, p);
            cell.J = fuel_metric(sol.fuel, reference.fuel);
            cell.objective = sol.objective;
            cell.max_soc_violation_pct = sol.audit.max_soc_violation_pct;
            cell.r_norm = sol.r_history.empty() ? 0.0 : sol.r_history.back();
            cell.s_norm = sol.s_history.empty() ? 0.0 : sol.s_history.back();
            cell.time_s = sol.solve_time_s;
        } catch (const std::exception&) {
            cell.J = kNaN;
            cell.objective = kNaN;
            cell.max_soc_violation_pct = kNaN;
            cell.r_norm = kNaN;
            cell.s_norm = kNaN;
        }
    });
    return cells;
}

std::size_t argmin_cell(const std::vector<RhoCell>& cells) {
    if (cells.empty()) throw std::invalid_argument("empty rho grid");
    std::size_t best = cells.size();
    for (std::size_t i = 0; i < cells.size(); ++i)
        if (std::isfinite(cells[i].J) && (best == cells.size() || cells[i].J < cells[best].J)) best = i;
    if (best == cells.size()) throw std::runtime_error("no rho grid point produced a finite J");
    return best;
}

void write_rho_csv(const std::string& path, const std::vector<RhoCell>& cells) {
    std::size_t best = cells.size();
    try {
        best = argmin_cell(cells);
    } catch (const std::exception&) {
    }
    auto out = open_csv(path);
    out << "rho1,rho2,J,objective,max_soc_violation_pct,r_norm,s_norm,time_s,is_min\n";
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& c = cells[i];
        out << c.rho1 << ',' << c.rho2 << ',' << c.J << ',' << c.objective << ','
            << c.max_soc_violation_pct << ',' << c.r_norm << ',' << c.s_norm << ',' << c.time_s << ','
            << (i == best ? 1 : 0) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Trajectories

void write_trajectory_csv(const std::string& path, const ConvexProblem& prob, const Solution& opt,
                          const Solution& admm, const Solution& dp) {
    const auto n = static_cast<Eigen::Index>(prob.horizon()) + 1;
    if (opt.energy.size() != n || admm.energy.size() != n || dp.energy.size() != n)
        throw std::invalid_argument("trajectories must all have N + 1 states");
    const double pct = 100.0 / prob.full_energy();
    auto out = open_csv(path);
    out << "k,E_opt,E_admm,E_dp,soc_opt_pct,soc_admm_pct,soc_dp_pct,soc_lo_pct,soc_hi_pct\n";
    for (Eigen::Index k = 0; k < n; ++k) {
        out << k << ',' << opt.energy[k] << ',' << admm.energy[k] << ',' << dp.energy[k] << ','
            << opt.energy[k] * pct << ',' << admm.energy[k] * pct << ',' << dp.energy[k] * pct << ','
            << prob.energy_lo() * pct << ',' << prob.energy_hi() * pct << '\n';
    }
}

}  // namespace hevmpc
