#include "hevmpc/drive_cycle.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "hevmpc/errors.hpp"

namespace hevmpc {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    return out;
}

double parse_number(const std::string& cell, const std::string& path, std::size_t lineno) {
    try {
        std::size_t used = 0;
        const double x = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
        return x;
    } catch (const std::exception&) {
        throw ParseError(path, lineno, "not a number: '" + cell + "'");
    }
}

}  // namespace

CycleData load_cycle(const std::string& path, const CycleLoadOptions& options) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, 0, "cannot open file");

    CycleData cycle;
    std::string line;
    std::size_t lineno = 0;
    std::size_t columns = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto cells = split(line);
        if (columns == 0) {
            if (cells.size() < 2 || cells.size() > 3 || cells[0] != "t" || cells[1] != "v" ||
                (cells.size() == 3 && cells[2] != "theta"))
                throw ParseError(path, lineno, "expected header 't,v' or 't,v,theta'");
            columns = cells.size();
            cycle.has_gradient = columns == 3;
            continue;
        }
        if (cells.size() != columns)
            throw ParseError(path, lineno, "expected " + std::to_string(columns) + " columns");
        const double t = parse_number(cells[0], path, lineno);
        double v = parse_number(cells[1], path, lineno);
        const double theta = columns == 3 ? parse_number(cells[2], path, lineno) : 0.0;
        if (!cycle.t.empty()) {
            const double dt = t - cycle.t.back();
            if (dt == 0.0) throw ParseError(path, lineno, "duplicate timestamp " + cells[0]);
            if (dt != 1.0)
                throw ParseError(path, lineno, "timestamps must advance by 1 s (got step " +
                                                   std::to_string(dt) + ")");
        }
        if (!(v >= 0.0)) throw ParseError(path, lineno, "negative speed " + cells[1]);
        if (options.units == SpeedUnits::MilesPerHour) v *= kMphToMps;
        cycle.t.push_back(t);
        cycle.v.push_back(v);
        cycle.theta.push_back(theta);
    }
    if (columns == 0) throw ParseError(path, lineno, "missing header");
    if (cycle.size() < options.min_samples)
        throw ParseError(path, 0,
                         "cycle has " + std::to_string(cycle.size()) + " samples, need at least " +
                             std::to_string(options.min_samples));
    return cycle;
}

std::vector<double> central_difference(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<double> d(n, 0.0);
    if (n < 2) return d;
    d.front() = v[1] - v[0];
    d.back() = v[n - 1] - v[n - 2];
    for (std::size_t k = 1; k + 1 < n; ++k) d[k] = 0.5 * (v[k + 1] - v[k - 1]);
    return d;
}

std::size_t truncation_start(std::size_t last_index, double mu) {
    if (!(mu > 0.0 && mu <= 1.0)) throw std::invalid_argument("mu must lie in (0, 1]");
    return static_cast<std::size_t>(std::round((1.0 - mu) * static_cast<double>(last_index)));
}

std::vector<double> step_gradient(std::size_t last_index, double theta_s) {
    std::vector<double> theta(last_index + 1);
    for (std::size_t t = 0; t <= last_index; ++t)
        theta[t] = 2.0 * static_cast<double>(t) <= static_cast<double>(last_index) ? theta_s : -theta_s;
    return theta;
}

DriveScenario scenario_from_horizon(std::vector<double> v, std::vector<double> theta,
                                    double initial_energy, const PowertrainModel& model) {
    if (v.size() != theta.size()) throw std::invalid_argument("v and theta lengths differ");
    if (v.size() < 2) throw std::invalid_argument("horizon needs at least two samples");

    DriveScenario s;
    s.v = std::move(v);
    s.theta = std::move(theta);
    s.vdot = central_difference(s.v);
    s.initial_energy = initial_energy;

    const std::size_t n = s.v.size();
    s.demand.resize(n);
    s.step_class.resize(n);
    s.omega.resize(n);
    s.omega_em.resize(n);
    s.omega_eng.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        s.demand[k] = demand_power(s.v[k], s.vdot[k], s.theta[k], model.vehicle);
        s.omega[k] = powertrain_speed(s.v[k], model.gears, k);
        s.step_class[k] = classify_step(s.demand[k], s.omega[k], model.limits);
        s.omega_em[k] = s.omega[k];
        s.omega_eng[k] = s.step_class[k] == StepClass::Hybrid ? s.omega[k] : model.limits.omega_eng_min;
    }
    return s;
}

DriveScenario make_scenario(const CycleData& cycle, const ScenarioOptions& options,
                            const PowertrainModel& model) {
    if (cycle.size() < 2) throw std::invalid_argument("cycle needs at least two samples");
    const std::size_t last = cycle.size() - 1;
    const std::size_t start = truncation_start(last, options.mu);

    const std::vector<double> gradient =
        options.theta_s ? step_gradient(last, *options.theta_s) : cycle.theta;

    std::vector<double> v(cycle.v.begin() + static_cast<std::ptrdiff_t>(start), cycle.v.end());
    std::vector<double> theta(gradient.begin() + static_cast<std::ptrdiff_t>(start), gradient.end());
    if (v.size() < 2) throw std::invalid_argument("mu leaves fewer than two samples");

    const double soc = options.initial_soc.value_or(0.5 + 0.1 * options.mu);
    auto s = scenario_from_horizon(std::move(v), std::move(theta),
                                   model.battery.energy_at_soc(soc), model);
    s.start = start;
    s.theta_s = options.theta_s.value_or(0.0);
    s.mu = options.mu;
    if (s.initial_energy < model.battery.energy_lo || s.initial_energy > model.battery.energy_hi)
        throw std::invalid_argument("initial state of charge outside the SOC limits");
    return s;
}

}  // namespace hevmpc
