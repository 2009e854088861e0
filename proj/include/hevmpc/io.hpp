// File formats: model parameters (JSON), solutions (JSON and per-step CSV) and
// the ADMM residual trace.
//
// Model JSON. Every key is optional and falls back to the built-in default:
//
//   {
//     "vehicle": {"mass", "air_density", "drag_coeff", "frontal_area",
//                 "rolling_coeff", "gravity", "regen_fraction"},
//     "gears": [{"v_lo", "v_hi", "ratio"}, ...],
//     "engine_map": "engine.csv" | [{"omega", "c2", "c1", "c0"}, ...],
//     "motor_map":  "motor.csv"  | [{"omega", "c2", "c1", "c0"}, ...],
//     "battery": {"open_circuit_voltage", "resistance", "capacity_ah",
//                 "soc_lo", "soc_hi"},
//     "torque": {"engine_lo", "engine_hi", "motor_lo", "motor_hi",
//                "omega_eng_min", "omega_eng_max"},
//     "idle_fuel": true
//   }
//
// Map paths are resolved relative to the model file. Unknown keys are errors.

#pragma once

#include <string>

#include "json.hpp"

#include "hevmpc/problem.hpp"

namespace hevmpc {

PowertrainModel load_model(const std::string& path);
PowertrainModel model_from_json(const nlohmann::json& j, const std::string& base_dir = ".",
                                const std::string& source = "<model>");
nlohmann::json model_to_json(const PowertrainModel& model);

/// Scalars, parameters, audit and the per-step vectors.
nlohmann::json solution_to_json(const Solution& sol);
/// Inverse of solution_to_json for the fields the harness reads back.
Solution solution_from_json(const nlohmann::json& j);

void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

/// Header: k,class,demand,battery_power,engine_power,motor_power,fuel,energy,soc_pct
/// `energy` and `soc_pct` are the state after step k.
void write_solution_csv(const std::string& path, const Solution& sol, const ConvexProblem& prob);

/// Header: iter,r_norm,s_norm,objective. `objective` is empty unless recorded.
void write_trace_csv(const std::string& path, const Solution& sol);

}  // namespace hevmpc
