#include "softsense/wo/params.hpp"

#include "softsense/common/json_util.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>

namespace softsense::wo {

using nlohmann::json;

namespace {

Component component_from_name(const std::string& name) {
  for (std::size_t i = 0; i < kNumComponents; ++i)
    if (kComponentNames[i] == name) return static_cast<Component>(i);
  throw std::invalid_argument("unknown component: " + name);
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  read_optional(j, key, out);
}

json components_to_json(const std::array<double, kNumComponents>& a) {
  json j = json::object();
  for (std::size_t i = 0; i < kNumComponents; ++i) j[std::string(kComponentNames[i])] = a[i];
  return j;
}

std::array<double, kNumComponents> components_from_json(const json& j, std::string_view where) {
  std::array<double, kNumComponents> a{};
  if (!j.is_object()) throw std::invalid_argument(std::string(where) + ": expected an object");
  for (const auto& [k, v] : j.items()) a[component_from_name(k)] = v.get<double>();
  return a;
}

json tuning_to_json(const PITuning& t) {
  return {{"kp", t.kp},       {"ki", t.ki},       {"bias", t.bias},
          {"u_min", t.u_min}, {"u_max", t.u_max}, {"anti_windup", t.anti_windup}};
}

void tuning_from_json(const json& j, PITuning& t, std::string_view where) {
  reject_unknown(j, where, {"kp", "ki", "bias", "u_min", "u_max", "anti_windup"});
  read(j, "kp", t.kp);
  read(j, "ki", t.ki);
  read(j, "bias", t.bias);
  read(j, "u_min", t.u_min);
  read(j, "u_max", t.u_max);
  read(j, "anti_windup", t.anti_windup);
}

}  // namespace

KineticParams KineticParams::williams_otto() {
  KineticParams k;
  // A + B -> C, rate basis kg of A.
  k.reactions[0].pre_exponential = 1.6599e6;
  k.reactions[0].activation = 6666.7;
  k.reactions[0].first = kA;
  k.reactions[0].second = kB;
  k.reactions[0].stoich = {-1.0, -1.0, 2.0, 0.0, 0.0, 0.0};
  k.reactions[0].heat_release = 150.0;
  // B + C -> P + E, rate basis kg of B.
  k.reactions[1].pre_exponential = 7.2117e8;
  k.reactions[1].activation = 8333.3;
  k.reactions[1].first = kB;
  k.reactions[1].second = kC;
  k.reactions[1].stoich = {0.0, -1.0, -2.0, 2.0, 0.0, 1.0};
  k.reactions[1].heat_release = 100.0;
  // C + P -> G, rate basis kg of C.
  k.reactions[2].pre_exponential = 2.6745e12;
  k.reactions[2].activation = 11111.0;
  k.reactions[2].first = kC;
  k.reactions[2].second = kP;
  k.reactions[2].stoich = {0.0, 0.0, -1.0, 0.0, 1.5, -0.5};
  k.reactions[2].heat_release = 50.0;
  return k;
}

void KineticParams::validate() const {
  for (std::size_t r = 0; r < reactions.size(); ++r) {
    const auto& rx = reactions[r];
    const std::string tag = "reaction " + std::to_string(r + 1);
    if (!(rx.pre_exponential > 0.0))
      throw std::invalid_argument(tag + ": pre-exponential factor must be positive");
    if (!(rx.activation > 0.0))
      throw std::invalid_argument(tag + ": activation parameter must be positive");
    double sum = 0.0, scale = 0.0;
    for (double s : rx.stoich) {
      sum += s;
      scale += std::abs(s);
    }
    if (std::abs(sum) > 1e-12 * std::max(1.0, scale))
      throw std::invalid_argument(tag + ": stoichiometric coefficients sum to " +
                                  std::to_string(sum) + ", not zero");
  }
}

void PlantConfig::validate() const {
  kinetics.validate();
  const auto& f = flowsheet;
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw std::invalid_argument(std::string(name) + " must be positive");
  };
  positive(f.holdup_capacity, "flowsheet.holdup_capacity");
  positive(f.heat_capacity, "flowsheet.heat_capacity");
  positive(f.f1_max, "flowsheet.f1_max");
  positive(f.f2_max, "flowsheet.f2_max");
  positive(f.valve_time_constant, "flowsheet.valve_time_constant");
  positive(f.delay_column_reactor, "flowsheet.delays.column_reactor");
  if (f.delay_reactor_decanter < 0.0 || f.delay_decanter_column < 0.0)
    throw std::invalid_argument("flowsheet delays must be nonnegative");
  for (double frac : f.column.overhead_fraction)
    if (frac < 0.0 || frac > 1.0)
      throw std::invalid_argument("column overhead fractions must lie in [0, 1]");
  if (f.column.p_retention_per_e < 0.0)
    throw std::invalid_argument("column p_retention_per_e must be nonnegative");
  for (const PITuning* t : {&controllers.flow1, &controllers.flow2, &controllers.level,
                            &controllers.temperature})
    if (!(t->u_min <= t->u_max)) throw std::invalid_argument("controller u_min exceeds u_max");
  if (!(nominal_inputs[4] >= 0.0 && nominal_inputs[4] < 1.0))
    throw std::invalid_argument("nominal_inputs.purge must lie in [0, 1)");
  positive(integrator.rel_tol, "integrator.rel_tol");
  positive(integrator.abs_tol, "integrator.abs_tol");
  positive(integrator.max_step, "integrator.max_step");
  positive(integrator.min_step, "integrator.min_step");
}

void to_json(json& j, const PlantConfig& c) {
  json reactions = json::array();
  for (const auto& rx : c.kinetics.reactions) {
    reactions.push_back({{"pre_exponential", rx.pre_exponential},
                         {"activation", rx.activation},
                         {"reactants",
                          {std::string(kComponentNames[rx.first]),
                           std::string(kComponentNames[rx.second])}},
                         {"stoich", components_to_json(rx.stoich)},
                         {"heat_release", rx.heat_release}});
  }
  const auto& f = c.flowsheet;
  j = {{"kinetics", {{"reactions", reactions}}},
       {"nominal_inputs",
        {{"F1_sp", c.nominal_inputs[0]},
         {"F2_sp", c.nominal_inputs[1]},
         {"T_sp", c.nominal_inputs[2]},
         {"L_sp", c.nominal_inputs[3]},
         {"purge", c.nominal_inputs[4]}}},
       {"flowsheet",
        {{"holdup_capacity", f.holdup_capacity},
         {"heat_capacity", f.heat_capacity},
         {"feed_temperature", f.feed_temperature},
         {"recycle_temperature", f.recycle_temperature},
         {"f1_max", f.f1_max},
         {"f2_max", f.f2_max},
         {"valve_time_constant", f.valve_time_constant},
         {"outflow_max", f.outflow_max},
         {"column",
          {{"overhead_fraction", components_to_json(f.column.overhead_fraction)},
           {"p_retention_per_e", f.column.p_retention_per_e}}},
         {"delays",
          {{"reactor_decanter", f.delay_reactor_decanter},
           {"decanter_column", f.delay_decanter_column},
           {"column_reactor", f.delay_column_reactor}}},
         {"constraint_temperature", f.constraint_temperature},
         {"suppress_product_above_limit", f.suppress_product_above_limit}}},
       {"controllers",
        {{"flow1", tuning_to_json(c.controllers.flow1)},
         {"flow2", tuning_to_json(c.controllers.flow2)},
         {"level", tuning_to_json(c.controllers.level)},
         {"temperature", tuning_to_json(c.controllers.temperature)}}},
       {"integrator",
        {{"rel_tol", c.integrator.rel_tol},
         {"abs_tol", c.integrator.abs_tol},
         {"max_step", c.integrator.max_step},
         {"min_step", c.integrator.min_step},
         {"initial_step", c.integrator.initial_step},
         {"max_steps", c.integrator.max_steps}}}};
}

void from_json(const json& j, PlantConfig& c) {
  reject_unknown(j, "plant", {"kinetics", "nominal_inputs", "flowsheet", "controllers", "integrator"});
  if (j.contains("nominal_inputs")) {
    const auto& jn = j.at("nominal_inputs");
    reject_unknown(jn, "nominal_inputs", {"F1_sp", "F2_sp", "T_sp", "L_sp", "purge"});
    read(jn, "F1_sp", c.nominal_inputs[0]);
    read(jn, "F2_sp", c.nominal_inputs[1]);
    read(jn, "T_sp", c.nominal_inputs[2]);
    read(jn, "L_sp", c.nominal_inputs[3]);
    read(jn, "purge", c.nominal_inputs[4]);
  }
  if (j.contains("kinetics")) {
    const auto& jk = j.at("kinetics");
    reject_unknown(jk, "kinetics", {"reactions"});
    const auto& arr = jk.at("reactions");
    if (!arr.is_array() || arr.size() != 3)
      throw std::invalid_argument("kinetics.reactions must list exactly 3 reactions");
    for (std::size_t r = 0; r < 3; ++r) {
      const auto& jr = arr[r];
      reject_unknown(jr, "kinetics.reactions[]",
                     {"name", "pre_exponential", "activation", "reactants", "stoich", "heat_release"});
      auto& rx = c.kinetics.reactions[r];
      read(jr, "pre_exponential", rx.pre_exponential);
      read(jr, "activation", rx.activation);
      read(jr, "heat_release", rx.heat_release);
      if (jr.contains("reactants")) {
        const auto& re = jr.at("reactants");
        if (!re.is_array() || re.size() != 2)
          throw std::invalid_argument("reaction reactants must name two components");
        rx.first = component_from_name(re[0].get<std::string>());
        rx.second = component_from_name(re[1].get<std::string>());
      }
      if (jr.contains("stoich")) rx.stoich = components_from_json(jr.at("stoich"), "stoich");
    }
  }
  if (j.contains("flowsheet")) {
    const auto& jf = j.at("flowsheet");
    reject_unknown(jf, "flowsheet",
                   {"holdup_capacity", "heat_capacity", "feed_temperature", "recycle_temperature",
                    "f1_max", "f2_max", "valve_time_constant", "outflow_max", "column", "delays",
                    "constraint_temperature", "suppress_product_above_limit"});
    auto& f = c.flowsheet;
    read(jf, "holdup_capacity", f.holdup_capacity);
    read(jf, "heat_capacity", f.heat_capacity);
    read(jf, "feed_temperature", f.feed_temperature);
    read(jf, "recycle_temperature", f.recycle_temperature);
    read(jf, "f1_max", f.f1_max);
    read(jf, "f2_max", f.f2_max);
    read(jf, "valve_time_constant", f.valve_time_constant);
    read(jf, "outflow_max", f.outflow_max);
    read(jf, "constraint_temperature", f.constraint_temperature);
    read(jf, "suppress_product_above_limit", f.suppress_product_above_limit);
    if (jf.contains("column")) {
      const auto& jc = jf.at("column");
      reject_unknown(jc, "flowsheet.column", {"overhead_fraction", "p_retention_per_e"});
      if (jc.contains("overhead_fraction"))
        f.column.overhead_fraction = components_from_json(jc.at("overhead_fraction"), "overhead_fraction");
      read(jc, "p_retention_per_e", f.column.p_retention_per_e);
    }
    if (jf.contains("delays")) {
      const auto& jd = jf.at("delays");
      reject_unknown(jd, "flowsheet.delays", {"reactor_decanter", "decanter_column", "column_reactor"});
      read(jd, "reactor_decanter", f.delay_reactor_decanter);
      read(jd, "decanter_column", f.delay_decanter_column);
      read(jd, "column_reactor", f.delay_column_reactor);
    }
  }
  if (j.contains("controllers")) {
    const auto& jc = j.at("controllers");
    reject_unknown(jc, "controllers", {"flow1", "flow2", "level", "temperature"});
    if (jc.contains("flow1")) tuning_from_json(jc.at("flow1"), c.controllers.flow1, "controllers.flow1");
    if (jc.contains("flow2")) tuning_from_json(jc.at("flow2"), c.controllers.flow2, "controllers.flow2");
    if (jc.contains("level")) tuning_from_json(jc.at("level"), c.controllers.level, "controllers.level");
    if (jc.contains("temperature"))
      tuning_from_json(jc.at("temperature"), c.controllers.temperature, "controllers.temperature");
  }
  if (j.contains("integrator")) {
    const auto& ji = j.at("integrator");
    reject_unknown(ji, "integrator",
                   {"rel_tol", "abs_tol", "max_step", "min_step", "initial_step", "max_steps"});
    read(ji, "rel_tol", c.integrator.rel_tol);
    read(ji, "abs_tol", c.integrator.abs_tol);
    read(ji, "max_step", c.integrator.max_step);
    read(ji, "min_step", c.integrator.min_step);
    read(ji, "initial_step", c.integrator.initial_step);
    read(ji, "max_steps", c.integrator.max_steps);
  }
}

PlantConfig load_plant_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open plant config: " + path.string());
  json j = json::parse(is, nullptr, true, /*ignore_comments=*/true);
  PlantConfig c = j.get<PlantConfig>();
  c.validate();
  return c;
}

}  // namespace softsense::wo
