#include "hevmpc/vehicle_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hevmpc/errors.hpp"

namespace hevmpc {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
}

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

}  // namespace

void VehicleParams::validate() const {
    require(mass > 0 && air_density > 0 && drag_coeff > 0 && frontal_area > 0 &&
                rolling_coeff > 0 && gravity > 0,
            "vehicle parameters must be strictly positive");
    require(regen_fraction >= 0.0 && regen_fraction <= 1.0, "regen_fraction must lie in [0, 1]");
}

void BatteryParams::validate() const {
    require(open_circuit_voltage > 0, "open_circuit_voltage must be positive");
    require(resistance > 0, "resistance must be positive");
    require(capacity_ah > 0, "capacity must be positive");
    require(energy_lo < energy_hi, "energy_lo must be below energy_hi");
}

void TorqueLimits::validate() const {
    require(engine_lo < engine_hi, "engine torque limits out of order");
    require(motor_lo < motor_hi, "motor torque limits out of order");
    require(omega_eng_min > 0 && omega_eng_min < omega_eng_max, "engine speed range invalid");
}

void PowertrainModel::validate() const {
    vehicle.validate();
    battery.validate();
    limits.validate();
    require(!gears.bands().empty(), "gear schedule is empty");
    require(!engine_map.speeds().empty() && !motor_map.speeds().empty(), "loss maps are empty");
}

// ---------------------------------------------------------------------------
// Gear schedule

GearSchedule::GearSchedule(std::vector<GearBand> bands) : bands_(std::move(bands)) {
    require(!bands_.empty(), "gear schedule needs at least one band");
    require(bands_.front().v_lo <= 0.0, "gear schedule must start at 0 m/s");
    for (std::size_t i = 0; i < bands_.size(); ++i) {
        const auto& b = bands_[i];
        require(b.ratio > 0.0, "gear ratio must be positive");
        require(b.v_lo < b.v_hi, "gear band must have v_lo < v_hi");
        if (i > 0) require(b.v_lo == bands_[i - 1].v_hi, "gear bands must be contiguous");
    }
}

GearSchedule GearSchedule::default_schedule() {
    return GearSchedule({{0.0, 7.0, 40.0},
                         {7.0, 13.0, 25.0},
                         {13.0, 20.0, 17.0},
                         {20.0, 28.0, 13.0},
                         {28.0, 40.0, 10.0}});
}

std::optional<std::size_t> GearSchedule::band_for(double v) const {
    if (bands_.empty() || !(v >= bands_.front().v_lo) || v > bands_.back().v_hi) return std::nullopt;
    // First band whose upper edge is >= v, so shared boundaries go to the lower band.
    const auto it = std::lower_bound(bands_.begin(), bands_.end(), v,
                                     [](const GearBand& b, double x) { return b.v_hi < x; });
    return static_cast<std::size_t>(it - bands_.begin());
}

// ---------------------------------------------------------------------------
// Loss maps

LossMapTable::LossMapTable(std::vector<double> speeds, std::vector<Quadratic> coeffs)
    : speeds_(std::move(speeds)), coeffs_(std::move(coeffs)) {
    require(!speeds_.empty(), "loss map needs at least one speed");
    require(speeds_.size() == coeffs_.size(), "loss map speeds/coefficients length mismatch");
    for (std::size_t i = 0; i < speeds_.size(); ++i) {
        require(coeffs_[i].c2 > 0.0, "loss map c2 must be strictly positive");
        if (i > 0) require(speeds_[i] > speeds_[i - 1], "loss map speeds must be strictly ascending");
    }
}

LossMapTable LossMapTable::load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, 0, "cannot open file");

    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    std::vector<double> speeds;
    std::vector<Quadratic> coeffs;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        if (!have_header) {
            std::string compact;
            for (char c : line)
                if (c != ' ') compact += c;
            if (compact != "omega,c2,c1,c0")
                throw ParseError(path, lineno, "expected header 'omega,c2,c1,c0'");
            have_header = true;
            continue;
        }
        std::stringstream ss(line);
        std::string cell;
        double vals[4];
        int n = 0;
        while (std::getline(ss, cell, ',')) {
            if (n >= 4) throw ParseError(path, lineno, "too many columns");
            try {
                std::size_t used = 0;
                const auto t = trim(cell);
                vals[n] = std::stod(t, &used);
                if (used != t.size()) throw std::invalid_argument(t);
            } catch (const std::exception&) {
                throw ParseError(path, lineno, "not a number: '" + trim(cell) + "'");
            }
            ++n;
        }
        if (n != 4) throw ParseError(path, lineno, "expected 4 columns");
        if (!(vals[1] > 0.0)) throw ParseError(path, lineno, "c2 must be strictly positive");
        if (!speeds.empty() && !(vals[0] > speeds.back()))
            throw ParseError(path, lineno, "speeds must be strictly ascending");
        speeds.push_back(vals[0]);
        coeffs.push_back({vals[1], vals[2], vals[3]});
    }
    if (!have_header) throw ParseError(path, lineno, "missing header");
    if (speeds.empty()) throw ParseError(path, lineno, "no data rows");
    return LossMapTable(std::move(speeds), std::move(coeffs));
}

LossMapTable default_engine_map() {
    // Willans form: peak efficiency 1 / (c1 + 2 sqrt(c0 c2)) fixed at 0.35.
    std::vector<double> speeds;
    std::vector<Quadratic> coeffs;
    for (int i = 0; i <= 10; ++i) {
        const double w = 100.0 + 50.0 * i;
        const double c0 = 1500.0 + 8.0 * w;
        const double c1 = 2.05 + 2e-4 * w;
        const double half_gap = 0.5 * (1.0 / 0.35 - c1);
        speeds.push_back(w);
        coeffs.push_back({half_gap * half_gap / c0, c1, c0});
    }
    return LossMapTable(std::move(speeds), std::move(coeffs));
}

LossMapTable default_motor_map() {
    std::vector<double> speeds;
    std::vector<Quadratic> coeffs;
    for (int i = 0; i <= 10; ++i) {
        const double w = 100.0 + 50.0 * i;
        const double c0 = 200.0 + 0.4 * w;
        const double c1 = 1.05;
        const double half_gap = 0.5 * (1.0 / 0.90 - c1);
        speeds.push_back(w);
        coeffs.push_back({half_gap * half_gap / c0, c1, c0});
    }
    return LossMapTable(std::move(speeds), std::move(coeffs));
}

// ---------------------------------------------------------------------------
// Longitudinal model and classification

char step_class_code(StepClass c) noexcept {
    switch (c) {
        case StepClass::Hybrid: return 'P';
        case StepClass::Electric: return 'C';
        case StepClass::Braking: return 'B';
    }
    return '?';
}

DemandTerms demand_terms(double v, double vdot, double theta, const VehicleParams& p) {
    DemandTerms t;
    t.inertial = p.mass * vdot * v;
    t.aero = 0.5 * p.air_density * v * v * p.drag_coeff * p.frontal_area * v;
    t.rolling = p.rolling_coeff * p.mass * p.gravity * std::cos(theta) * v;
    t.grade = p.mass * p.gravity * std::sin(theta) * v;
    return t;
}

double demand_power(double v, double vdot, double theta, const VehicleParams& p) {
    return (p.mass * vdot + 0.5 * p.air_density * v * v * p.drag_coeff * p.frontal_area +
            p.rolling_coeff * p.mass * p.gravity * std::cos(theta) +
            p.mass * p.gravity * std::sin(theta)) *
           v;
}

double powertrain_speed(double v, const GearSchedule& gears, std::size_t sample) {
    const auto band = gears.band_for(v);
    if (!band) {
        std::ostringstream os;
        os << "sample " << sample << ": speed " << v << " m/s outside gear schedule [0, "
           << gears.v_max() << "]";
        throw DomainError(os.str());
    }
    return gears.bands()[*band].ratio * v;
}

StepClass classify_step(double demand, double omega, const TorqueLimits& limits) {
    if (demand <= 0.0) return StepClass::Braking;
    return omega >= limits.omega_eng_min ? StepClass::Hybrid : StepClass::Electric;
}

Quadratic interp_coeffs(double omega, const LossMapTable& table) {
    const auto& w = table.speeds();
    const auto& c = table.coeffs();
    omega = std::clamp(omega, w.front(), w.back());
    const auto hi = static_cast<std::size_t>(std::lower_bound(w.begin(), w.end(), omega) - w.begin());
    if (w[hi] == omega) return c[hi];
    const std::size_t lo = hi - 1;
    const double t = (omega - w[lo]) / (w[hi] - w[lo]);
    return {c[lo].c2 + t * (c[hi].c2 - c[lo].c2), c[lo].c1 + t * (c[hi].c1 - c[lo].c1),
            c[lo].c0 + t * (c[hi].c0 - c[lo].c0)};
}

// ---------------------------------------------------------------------------
// Loss functions and the battery map

double fuel_power(double engine_power, const StepQuadratics& q) { return q.engine(engine_power); }

double electrical_power(double motor_power, const StepQuadratics& q) { return q.motor(motor_power); }

double motor_power_root(const StepQuadratics& q, const BatteryParams& batt) {
    // b2 P^2 + b1 P + (b0 - V^2/4R) = 0
    const auto& m = q.motor;
    const double v2 = batt.open_circuit_voltage * batt.open_circuit_voltage;
    const double c = m.c0 - v2 / (4.0 * batt.resistance);
    const double disc = m.c1 * m.c1 - 4.0 * m.c2 * c;
    if (disc < 0.0) return m.vertex();
    const double sq = std::sqrt(disc);
    // Larger root, evaluated without cancellation.
    return m.c1 >= 0.0 ? (-2.0 * c) / (m.c1 + sq) : (-m.c1 + sq) / (2.0 * m.c2);
}

double battery_power(double motor_power, const StepQuadratics& q, const BatteryParams& batt,
                     std::size_t step) {
    const double v2 = batt.open_circuit_voltage * batt.open_circuit_voltage;
    const double h = q.motor(motor_power);
    double radicand = 1.0 - 4.0 * batt.resistance / v2 * h;
    if (radicand < 0.0) {
        if (radicand < -1e-12) {
            std::ostringstream os;
            os << "motor power " << motor_power << " W exceeds battery limit r+ = "
               << motor_power_root(q, batt) << " W";
            throw InfeasibleStep(step, os.str());
        }
        radicand = 0.0;
    }
    // V^2/2R (1 - sqrt(1 - x)) rewritten as 2h / (1 + sqrt(1 - x)).
    return 2.0 * h / (1.0 + std::sqrt(radicand));
}

double battery_power_inverse(double pb, const StepQuadratics& q, const BatteryParams& batt) {
    const auto& m = q.motor;
    const double v2 = batt.open_circuit_voltage * batt.open_circuit_voltage;
    const double pb_max = batt.max_chemical_power();
    if (pb > pb_max * (1.0 + 1e-12)) {
        std::ostringstream os;
        os << "battery power " << pb << " W above maximum " << pb_max << " W";
        throw DomainError(os.str());
    }
    // h(P_em) = P_b - R P_b^2 / V^2; solve on the branch right of the vertex.
    const double shifted = (pb - batt.resistance * pb * pb / v2 - m.c0) / m.c2;  // rad - vertex^2
    const double half = m.c1 / (2.0 * m.c2);
    double radicand = shifted + half * half;
    if (radicand < 0.0) {
        if (radicand < -1e-12 * half * half) {
            std::ostringstream os;
            os << "battery power " << pb << " W below the range of g (motor vertex "
               << m.vertex() << " W)";
            throw DomainError(os.str());
        }
        radicand = 0.0;
    }
    const double root = std::sqrt(radicand);
    if (half > 0.0) return shifted / (root + half);
    return -half + root;
}

// ---------------------------------------------------------------------------
// Bounds

StepBounds restricted_bounds(const StepInput& step, const PowertrainModel& model) {
    const auto& lim = model.limits;
    const auto& q = step.quadratics;
    StepBounds b;
    switch (step.step_class) {
        case StepClass::Electric:
            b.motor_lo_plus = step.demand;
            b.battery_lo = b.battery_hi = battery_power(step.demand, q, model.battery, step.index);
            return b;
        case StepClass::Braking: {
            const double em = model.vehicle.regen_fraction * step.demand;
            b.motor_lo_plus = em;
            b.battery_lo = b.battery_hi = battery_power(em, q, model.battery, step.index);
            return b;
        }
        case StepClass::Hybrid: break;
    }

    const double w = step.omega;
    const double r_plus = motor_power_root(q, model.battery);
    b.engine_lo = std::max(lim.engine_lo * w, step.demand - std::min(lim.motor_hi * w, r_plus));
    b.engine_hi = std::min(lim.engine_hi * w, step.demand - lim.motor_lo * w);
    b.engine_lo_plus = std::max(b.engine_lo, q.engine.vertex());
    b.motor_lo_plus = std::max(step.demand - b.engine_hi, q.motor.vertex());
    const double motor_hi = step.demand - b.engine_lo_plus;

    if (b.engine_lo_plus > b.engine_hi || b.motor_lo_plus > motor_hi) {
        std::ostringstream os;
        os << "demand " << step.demand << " W at " << w << " rad/s: engine range ["
           << b.engine_lo_plus << ", " << b.engine_hi << "] W, motor range [" << b.motor_lo_plus
           << ", " << motor_hi << "] W";
        throw InfeasibleStep(step.index, os.str());
    }
    b.battery_lo = battery_power(b.motor_lo_plus, q, model.battery, step.index);
    b.battery_hi = battery_power(motor_hi, q, model.battery, step.index);
    if (b.battery_lo > b.battery_hi) {
        std::ostringstream os;
        os << "battery bounds inverted: " << b.battery_lo << " > " << b.battery_hi;
        throw InfeasibleStep(step.index, os.str());
    }
    return b;
}

}  // namespace hevmpc
