#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "hevmpc/vehicle_model.hpp"

namespace hevmpc {

/// Velocity (and optional gradient) trace sampled at 1 Hz.
struct CycleData {
    std::vector<double> t;      // s, consecutive integers
    std::vector<double> v;      // m/s
    std::vector<double> theta;  // rad; zeros when the file has no gradient column
    bool has_gradient{false};

    [[nodiscard]] std::size_t size() const noexcept { return v.size(); }
};

enum class SpeedUnits { MetersPerSecond, MilesPerHour };

inline constexpr double kMphToMps = 0.44704;

struct CycleLoadOptions {
    SpeedUnits units{SpeedUnits::MetersPerSecond};
    std::size_t min_samples{10};
};

/// Reads a `t,v[,theta]` CSV. Timestamps must advance by exactly 1 s; speeds
/// must be non-negative. Errors name the offending line.
CycleData load_cycle(const std::string& path, const CycleLoadOptions& options = {});

/// Central differences in the interior, one-sided first differences at the ends
/// (unit sample spacing).
std::vector<double> central_difference(const std::vector<double>& v);

struct ScenarioOptions {
    /// Gradient step magnitude. When set, replaces the file gradient with
    /// +theta_s for t <= T/2 and -theta_s afterwards.
    std::optional<double> theta_s;
    /// Fraction of the cycle kept, counted back from the end. (0, 1].
    double mu{1.0};
    /// Initial state of charge as a fraction; defaults to 0.5 + 0.1 mu.
    std::optional<double> initial_soc;
};

/// One predicted horizon with derived demand, speeds and step classes.
struct DriveScenario {
    std::size_t start{0};  // index of the first kept cycle sample
    std::vector<double> v;
    std::vector<double> theta;
    std::vector<double> vdot;
    std::vector<double> demand;
    std::vector<StepClass> step_class;
    std::vector<double> omega;
    std::vector<double> omega_em;
    std::vector<double> omega_eng;
    double initial_energy{0.0};  // J
    double theta_s{0.0};
    double mu{1.0};

    [[nodiscard]] std::size_t horizon() const noexcept { return v.size(); }
};

/// Index of the first kept sample: (1 - mu) T rounded half away from zero.
std::size_t truncation_start(std::size_t last_index, double mu);

/// Gradient step profile over t = 0..T.
std::vector<double> step_gradient(std::size_t last_index, double theta_s);

DriveScenario make_scenario(const CycleData& cycle, const ScenarioOptions& options,
                            const PowertrainModel& model);

/// Scenario from raw horizon vectors (no truncation or gradient rewriting).
DriveScenario scenario_from_horizon(std::vector<double> v, std::vector<double> theta,
                                    double initial_energy, const PowertrainModel& model);

}  // namespace hevmpc
