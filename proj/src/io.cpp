#include "hevmpc/io.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "hevmpc/errors.hpp"

namespace hevmpc {

namespace {

using nlohmann::json;

constexpr double kDefaultSocLo = 0.50;
constexpr double kDefaultSocHi = 0.62;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where,
                const std::string& source) {
    if (!j.is_object()) throw ParseError(source, 0, where + ": expected an object");
    for (const auto& [key, _] : j.items())
        if (!allowed.count(key)) throw ParseError(source, 0, where + ": unknown key '" + key + "'");
}

void read_number(const json& j, const char* key, double& out, const std::string& where,
                 const std::string& source) {
    if (!j.contains(key)) return;
    if (!j[key].is_number())
        throw ParseError(source, 0, where + "." + key + ": expected a number");
    out = j[key].get<double>();
}

LossMapTable read_map(const json& j, const std::string& where, const std::string& base_dir,
                      const std::string& source) {
    if (j.is_string()) {
        std::filesystem::path p(j.get<std::string>());
        if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
        return LossMapTable::load_csv(p.string());
    }
    if (!j.is_array() || j.empty())
        throw ParseError(source, 0, where + ": expected a CSV path or a non-empty array");
    std::vector<double> speeds;
    std::vector<Quadratic> coeffs;
    for (const auto& row : j) {
        check_keys(row, {"omega", "c2", "c1", "c0"}, where, source);
        double omega = 0.0;
        Quadratic q;
        read_number(row, "omega", omega, where, source);
        read_number(row, "c2", q.c2, where, source);
        read_number(row, "c1", q.c1, where, source);
        read_number(row, "c0", q.c0, where, source);
        speeds.push_back(omega);
        coeffs.push_back(q);
    }
    try {
        return LossMapTable(std::move(speeds), std::move(coeffs));
    } catch (const std::invalid_argument& e) {
        throw ParseError(source, 0, where + ": " + e.what());
    }
}

json map_to_json(const LossMapTable& table) {
    json rows = json::array();
    for (std::size_t i = 0; i < table.speeds().size(); ++i) {
        const auto& q = table.coeffs()[i];
        rows.push_back({{"omega", table.speeds()[i]}, {"c2", q.c2}, {"c1", q.c1}, {"c0", q.c0}});
    }
    return rows;
}

json vector_to_json(const Eigen::VectorXd& v) {
    return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd vector_from_json(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::ofstream open_out(const std::string& path) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    return out;
}

}  // namespace

PowertrainModel model_from_json(const json& j, const std::string& base_dir,
                                const std::string& source) {
    check_keys(j, {"vehicle", "gears", "engine_map", "motor_map", "battery", "torque", "idle_fuel"},
               "model", source);
    PowertrainModel m;

    if (j.contains("vehicle")) {
        const auto& v = j["vehicle"];
        check_keys(v, {"mass", "air_density", "drag_coeff", "frontal_area", "rolling_coeff", "gravity",
                       "regen_fraction"},
                   "vehicle", source);
        read_number(v, "mass", m.vehicle.mass, "vehicle", source);
        read_number(v, "air_density", m.vehicle.air_density, "vehicle", source);
        read_number(v, "drag_coeff", m.vehicle.drag_coeff, "vehicle", source);
        read_number(v, "frontal_area", m.vehicle.frontal_area, "vehicle", source);
        read_number(v, "rolling_coeff", m.vehicle.rolling_coeff, "vehicle", source);
        read_number(v, "gravity", m.vehicle.gravity, "vehicle", source);
        read_number(v, "regen_fraction", m.vehicle.regen_fraction, "vehicle", source);
    }

    if (j.contains("gears")) {
        if (!j["gears"].is_array()) throw ParseError(source, 0, "gears: expected an array");
        std::vector<GearBand> bands;
        for (const auto& row : j["gears"]) {
            check_keys(row, {"v_lo", "v_hi", "ratio"}, "gears", source);
            GearBand b{0.0, 0.0, 0.0};
            read_number(row, "v_lo", b.v_lo, "gears", source);
            read_number(row, "v_hi", b.v_hi, "gears", source);
            read_number(row, "ratio", b.ratio, "gears", source);
            bands.push_back(b);
        }
        try {
            m.gears = GearSchedule(std::move(bands));
        } catch (const std::invalid_argument& e) {
            throw ParseError(source, 0, std::string("gears: ") + e.what());
        }
    }

    if (j.contains("engine_map")) m.engine_map = read_map(j["engine_map"], "engine_map", base_dir, source);
    if (j.contains("motor_map")) m.motor_map = read_map(j["motor_map"], "motor_map", base_dir, source);

    double soc_lo = kDefaultSocLo;
    double soc_hi = kDefaultSocHi;
    if (j.contains("battery")) {
        const auto& b = j["battery"];
        check_keys(b, {"open_circuit_voltage", "resistance", "capacity_ah", "soc_lo", "soc_hi"}, "battery",
                   source);
        read_number(b, "open_circuit_voltage", m.battery.open_circuit_voltage, "battery", source);
        read_number(b, "resistance", m.battery.resistance, "battery", source);
        read_number(b, "capacity_ah", m.battery.capacity_ah, "battery", source);
        read_number(b, "soc_lo", soc_lo, "battery", source);
        read_number(b, "soc_hi", soc_hi, "battery", source);
    }
    if (!(0.0 <= soc_lo && soc_lo < soc_hi && soc_hi <= 1.0))
        throw ParseError(source, 0, "battery: need 0 <= soc_lo < soc_hi <= 1");
    m.battery.energy_lo = m.battery.energy_at_soc(soc_lo);
    m.battery.energy_hi = m.battery.energy_at_soc(soc_hi);

    if (j.contains("torque")) {
        const auto& t = j["torque"];
        check_keys(t, {"engine_lo", "engine_hi", "motor_lo", "motor_hi", "omega_eng_min", "omega_eng_max"},
                   "torque", source);
        read_number(t, "engine_lo", m.limits.engine_lo, "torque", source);
        read_number(t, "engine_hi", m.limits.engine_hi, "torque", source);
        read_number(t, "motor_lo", m.limits.motor_lo, "torque", source);
        read_number(t, "motor_hi", m.limits.motor_hi, "torque", source);
        read_number(t, "omega_eng_min", m.limits.omega_eng_min, "torque", source);
        read_number(t, "omega_eng_max", m.limits.omega_eng_max, "torque", source);
    }

    if (j.contains("idle_fuel")) {
        if (!j["idle_fuel"].is_boolean()) throw ParseError(source, 0, "idle_fuel: expected a boolean");
        m.idle_fuel = j["idle_fuel"].get<bool>();
    }

    try {
        m.validate();
    } catch (const std::invalid_argument& e) {
        throw ParseError(source, 0, e.what());
    }
    return m;
}

PowertrainModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, 0, "cannot open file");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path, 0, e.what());
    }
    const auto base = std::filesystem::path(path).parent_path().string();
    return model_from_json(j, base.empty() ? "." : base, path);
}

json model_to_json(const PowertrainModel& m) {
    json gears = json::array();
    for (const auto& b : m.gears.bands()) gears.push_back({{"v_lo", b.v_lo}, {"v_hi", b.v_hi}, {"ratio", b.ratio}});
    const double full = m.battery.full_energy();
    return {
        {"vehicle",
         {{"mass", m.vehicle.mass},
          {"air_density", m.vehicle.air_density},
          {"drag_coeff", m.vehicle.drag_coeff},
          {"frontal_area", m.vehicle.frontal_area},
          {"rolling_coeff", m.vehicle.rolling_coeff},
          {"gravity", m.vehicle.gravity},
          {"regen_fraction", m.vehicle.regen_fraction}}},
        {"gears", gears},
        {"engine_map", map_to_json(m.engine_map)},
        {"motor_map", map_to_json(m.motor_map)},
        {"battery",
         {{"open_circuit_voltage", m.battery.open_circuit_voltage},
          {"resistance", m.battery.resistance},
          {"capacity_ah", m.battery.capacity_ah},
          {"soc_lo", m.battery.energy_lo / full},
          {"soc_hi", m.battery.energy_hi / full}}},
        {"torque",
         {{"engine_lo", m.limits.engine_lo},
          {"engine_hi", m.limits.engine_hi},
          {"motor_lo", m.limits.motor_lo},
          {"motor_hi", m.limits.motor_hi},
          {"omega_eng_min", m.limits.omega_eng_min},
          {"omega_eng_max", m.limits.omega_eng_max}}},
        {"idle_fuel", m.idle_fuel},
    };
}

json solution_to_json(const Solution& sol) {
    return {
        {"solver", sol.solver},
        {"objective", sol.objective},
        {"total_fuel", sol.total_fuel},
        {"converged", sol.converged},
        {"feasible", sol.feasible},
        {"iterations", sol.iterations},
        {"solve_time_s", sol.solve_time_s},
        {"setup_time_s", sol.setup_time_s},
        {"params", sol.params},
        {"audit",
         {{"max_soc_violation_pct", sol.audit.max_soc_violation_pct},
          {"max_bound_violation", sol.audit.max_bound_violation},
          {"dynamics_residual", sol.audit.dynamics_residual}}},
        {"battery_power", vector_to_json(sol.battery_power)},
        {"engine_power", vector_to_json(sol.engine_power)},
        {"motor_power", vector_to_json(sol.motor_power)},
        {"energy", vector_to_json(sol.energy)},
        {"fuel", vector_to_json(sol.fuel)},
    };
}

Solution solution_from_json(const json& j) {
    Solution sol;
    try {
        sol.solver = j.at("solver").get<std::string>();
        sol.objective = j.at("objective").get<double>();
        sol.total_fuel = j.at("total_fuel").get<double>();
        sol.converged = j.at("converged").get<bool>();
        sol.feasible = j.at("feasible").get<bool>();
        sol.iterations = j.at("iterations").get<std::size_t>();
        sol.solve_time_s = j.at("solve_time_s").get<double>();
        sol.setup_time_s = j.value("setup_time_s", 0.0);
        sol.params = j.value("params", std::map<std::string, double>{});
        if (j.contains("audit")) {
            const auto& a = j["audit"];
            sol.audit.max_soc_violation_pct = a.value("max_soc_violation_pct", 0.0);
            sol.audit.max_bound_violation = a.value("max_bound_violation", 0.0);
            sol.audit.dynamics_residual = a.value("dynamics_residual", 0.0);
        }
        sol.battery_power = vector_from_json(j.at("battery_power"));
        sol.engine_power = vector_from_json(j.at("engine_power"));
        sol.motor_power = vector_from_json(j.at("motor_power"));
        sol.energy = vector_from_json(j.at("energy"));
        sol.fuel = vector_from_json(j.at("fuel"));
    } catch (const json::exception& e) {
        throw ParseError("<solution>", 0, e.what());
    }
    return sol;
}

void write_json(const std::string& path, const json& j) {
    auto out = open_out(path);
    out << j.dump(2) << '\n';
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, 0, "cannot open file");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path, 0, e.what());
    }
}

void write_solution_csv(const std::string& path, const Solution& sol, const ConvexProblem& prob) {
    const auto n = static_cast<Eigen::Index>(prob.horizon());
    if (sol.battery_power.size() != n || sol.energy.size() != n + 1)
        throw std::invalid_argument("solution does not match the problem horizon");
    auto out = open_out(path);
    out << "k,class,demand,battery_power,engine_power,motor_power,fuel,energy,soc_pct\n";
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        out << k << ',' << step_class_code(prob.step(k).step_class) << ',' << prob.step(k).demand << ','
            << sol.battery_power[i] << ',' << sol.engine_power[i] << ',' << sol.motor_power[i] << ','
            << sol.fuel[i] << ',' << sol.energy[i + 1] << ','
            << 100.0 * sol.energy[i + 1] / prob.full_energy() << '\n';
    }
}

void write_trace_csv(const std::string& path, const Solution& sol) {
    auto out = open_out(path);
    out << "iter,r_norm,s_norm,objective\n";
    for (std::size_t i = 0; i < sol.r_history.size(); ++i) {
        out << i + 1 << ',' << sol.r_history[i] << ',' << sol.s_history[i] << ',';
        if (i < sol.objective_history.size()) out << sol.objective_history[i];
        out << '\n';
    }
}

}  // namespace hevmpc
