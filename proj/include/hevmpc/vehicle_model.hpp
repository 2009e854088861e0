// Parallel plug-in hybrid powertrain: longitudinal demand model, gear
// heuristic, quadratic loss maps and the battery power map g with its inverse.
//
// Units throughout: W for power, J for energy, m/s, rad, rad/s, Nm.
// The simulation step is fixed at 1 s, so a power in W applied for one step
// changes stored energy by the same number of J.

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace hevmpc {

struct VehicleParams {
    double mass{1800.0};          // kg
    double air_density{1.225};    // kg/m^3
    double drag_coeff{0.30};
    double frontal_area{2.3};     // m^2
    double rolling_coeff{0.01};
    double gravity{9.81};         // m/s^2
    double regen_fraction{0.4};   // share of braking power routed to the motor

    void validate() const;
};

struct GearBand {
    double v_lo;   // m/s
    double v_hi;   // m/s
    double ratio;  // rad/m
};

/// Speed-banded fixed gear schedule. Bands are contiguous; a speed sitting
/// exactly on a shared boundary uses the lower band.
class GearSchedule {
public:
    GearSchedule() = default;
    explicit GearSchedule(std::vector<GearBand> bands);

    static GearSchedule default_schedule();

    /// Index of the band containing v, or nullopt if v is outside [v_lo(0), v_hi(last)].
    [[nodiscard]] std::optional<std::size_t> band_for(double v) const;

    [[nodiscard]] const std::vector<GearBand>& bands() const noexcept { return bands_; }
    [[nodiscard]] double v_max() const { return bands_.back().v_hi; }

private:
    std::vector<GearBand> bands_;
};

/// c2 x^2 + c1 x + c0.
struct Quadratic {
    double c2{0.0};
    double c1{0.0};
    double c0{0.0};

    [[nodiscard]] double operator()(double x) const noexcept { return (c2 * x + c1) * x + c0; }
    [[nodiscard]] double derivative(double x) const noexcept { return 2.0 * c2 * x + c1; }
    [[nodiscard]] double vertex() const noexcept { return -c1 / (2.0 * c2); }
};

/// Quadratic loss-map coefficients tabulated over shaft speed.
class LossMapTable {
public:
    LossMapTable() = default;
    LossMapTable(std::vector<double> speeds, std::vector<Quadratic> coeffs);

    /// CSV with header `omega,c2,c1,c0`; errors carry the offending line.
    static LossMapTable load_csv(const std::string& path);

    [[nodiscard]] const std::vector<double>& speeds() const noexcept { return speeds_; }
    [[nodiscard]] const std::vector<Quadratic>& coeffs() const noexcept { return coeffs_; }
    [[nodiscard]] double omega_min() const { return speeds_.front(); }
    [[nodiscard]] double omega_max() const { return speeds_.back(); }

private:
    std::vector<double> speeds_;
    std::vector<Quadratic> coeffs_;
};

/// Synthetic Willans-style engine map: 11 speeds over [100, 600] rad/s, peak
/// efficiency 35 %, positive idle loss.
LossMapTable default_engine_map();
/// Synthetic motor map on the same grid, peak efficiency 90 %.
LossMapTable default_motor_map();

struct BatteryParams {
    double open_circuit_voltage{350.0};  // V
    double resistance{0.1};              // Ohm
    double capacity_ah{21.5};
    double energy_lo{0.50 * 350.0 * 21.5 * 3600.0};  // J
    double energy_hi{0.62 * 350.0 * 21.5 * 3600.0};  // J

    /// V_oc * capacity, in J.
    [[nodiscard]] double full_energy() const noexcept {
        return open_circuit_voltage * capacity_ah * 3600.0;
    }
    [[nodiscard]] double energy_at_soc(double soc_fraction) const noexcept {
        return soc_fraction * full_energy();
    }
    /// Largest chemical power g can deliver, V_oc^2 / 2R.
    [[nodiscard]] double max_chemical_power() const noexcept {
        return open_circuit_voltage * open_circuit_voltage / (2.0 * resistance);
    }

    void validate() const;
};

struct TorqueLimits {
    double engine_lo{0.0};     // Nm
    double engine_hi{200.0};
    double motor_lo{-150.0};
    double motor_hi{150.0};
    double omega_eng_min{100.0};  // rad/s
    double omega_eng_max{600.0};

    void validate() const;
};

/// Loss-map coefficients interpolated for one horizon step.
struct StepQuadratics {
    Quadratic engine;  // f_k: fuel power from engine power
    Quadratic motor;   // h_k: electrical power from motor power
};

struct PowertrainModel {
    VehicleParams vehicle;
    GearSchedule gears{GearSchedule::default_schedule()};
    LossMapTable engine_map{default_engine_map()};
    LossMapTable motor_map{default_motor_map()};
    BatteryParams battery;
    TorqueLimits limits;
    /// Charge engine idle fuel on steps where the engine is declutched.
    bool idle_fuel{true};

    void validate() const;
};

enum class StepClass {
    Hybrid,    // P: positive demand, engine may engage
    Electric,  // C: positive demand below minimum engine speed
    Braking,   // B: non-positive demand
};

char step_class_code(StepClass c) noexcept;

/// The four force terms of the longitudinal model, multiplied by speed.
struct DemandTerms {
    double inertial{0.0};
    double aero{0.0};
    double rolling{0.0};
    double grade{0.0};

    [[nodiscard]] double total() const noexcept { return inertial + aero + rolling + grade; }
};

DemandTerms demand_terms(double v, double vdot, double theta, const VehicleParams& params);
double demand_power(double v, double vdot, double theta, const VehicleParams& params);

/// k_i * v for the band containing v. `sample` is only used in the error message.
double powertrain_speed(double v, const GearSchedule& gears, std::size_t sample = 0);

StepClass classify_step(double demand, double omega, const TorqueLimits& limits);

/// Componentwise linear interpolation of the coefficient triples; omega is
/// clamped to the table's speed range first.
Quadratic interp_coeffs(double omega, const LossMapTable& table);

double fuel_power(double engine_power, const StepQuadratics& q);
double electrical_power(double motor_power, const StepQuadratics& q);

/// Largest real root r+ of (4R/V_oc^2) h(P) - 1 = 0, the motor power at which
/// the battery reaches its maximum chemical power.
double motor_power_root(const StepQuadratics& q, const BatteryParams& batt);

/// g(P_em) = V^2/2R (1 - sqrt(1 - 4R/V^2 h(P_em))). Throws InfeasibleStep
/// (carrying `step` and r+) when the radicand is negative.
double battery_power(double motor_power, const StepQuadratics& q, const BatteryParams& batt,
                     std::size_t step = 0);

/// Closed-form inverse of g on the non-decreasing branch P_em >= -b1/2b2.
/// Valid for g(-b1/2b2) <= P_b <= V^2/2R; throws DomainError otherwise.
double battery_power_inverse(double battery_power, const StepQuadratics& q,
                             const BatteryParams& batt);

/// Operating envelope of one step after domain restriction.
struct StepBounds {
    double engine_lo{0.0};       // P_eng lower limit (idle power for non-hybrid steps)
    double engine_hi{0.0};
    double engine_lo_plus{0.0};  // max(engine_lo, vertex of f)
    double motor_lo_plus{0.0};   // max(P_drv - engine_hi, vertex of h)
    double battery_lo{0.0};
    double battery_hi{0.0};
};

struct StepInput {
    std::size_t index{0};
    double demand{0.0};  // W
    double omega{0.0};   // powertrain speed, rad/s
    StepClass step_class{StepClass::Braking};
    StepQuadratics quadratics;
};

/// Power limits and battery-power bounds of one step. Throws InfeasibleStep
/// when the engine/motor envelope is empty or P_b_lo > P_b_hi.
StepBounds restricted_bounds(const StepInput& step, const PowertrainModel& model);

}  // namespace hevmpc
