#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string_view>

#include <nlohmann/json.hpp>

namespace softsense::wo {

enum Component : std::size_t { kA = 0, kB, kC, kE, kG, kP, kNumComponents };

inline constexpr std::array<std::string_view, kNumComponents> kComponentNames{"A", "B", "C",
                                                                              "E", "G", "P"};

/// One mass-based Arrhenius reaction. Rate [kg/s] = A exp(-B/T) w_first w_second M,
/// where M is the reactor holdup; `stoich` gives kg of each component produced
/// (+) or consumed (-) per kg of rate.
struct Reaction {
  double pre_exponential = 0.0;  // 1/s
  double activation = 0.0;       // K
  Component first = kA;
  Component second = kB;
  std::array<double, kNumComponents> stoich{};
  double heat_release = 0.0;  // kJ per kg of rate, positive = exothermic
};

struct KineticParams {
  std::array<Reaction, 3> reactions{};

  /// Throws std::invalid_argument if a constant is non-positive or a
  /// reaction does not conserve mass.
  void validate() const;

  /// A + B -> C, B + C -> P + E, C + P -> G with the classical constants.
  static KineticParams williams_otto();
};

/// Ideal column: all P goes overhead except a retention proportional to the
/// E in the feed; other components go overhead with fixed fractions.
struct ColumnParams {
  std::array<double, kNumComponents> overhead_fraction{0.0, 0.0, 0.0, 0.1, 0.0, 1.0};
  double p_retention_per_e = 0.1;
};

struct FlowsheetParams {
  double holdup_capacity = 4210.0;      // kg at L = 1
  double heat_capacity = 2.5;           // kJ/(kg K)
  double feed_temperature = 300.0;      // K
  double recycle_temperature = 320.0;   // K
  double f1_max = 10.0;                 // kg/s at full valve opening
  double f2_max = 20.0;                 // kg/s
  double valve_time_constant = 2.0;     // s
  double outflow_max = 200.0;           // kg/s, level loop actuator limit
  ColumnParams column{};
  // Transport delays: reactor->decanter, decanter->column, column->reactor.
  double delay_reactor_decanter = 5.0;  // s
  double delay_decanter_column = 4.0;   // s
  double delay_column_reactor = 30.0;   // s
  double constraint_temperature = 383.15;  // K
  bool suppress_product_above_limit = false;
};

struct PITuning {
  double kp = 0.0;
  double ki = 0.0;
  double bias = 0.0;
  double u_min = 0.0;
  double u_max = 1.0;
  bool anti_windup = true;
};

struct ControllerSet {
  PITuning flow1{0.04, 0.02, 0.0, 0.0, 1.0, true};
  PITuning flow2{0.02, 0.01, 0.0, 0.0, 1.0, true};
  // Reverse acting: more level -> more outflow.
  PITuning level{-60.0, -0.2, 0.0, 0.0, 200.0, true};
  PITuning temperature{60.0, 0.6, 0.0, 0.0, 8000.0, true};
};

struct IntegratorOptions {
  double rel_tol = 1e-8;
  double abs_tol = 1e-10;
  double max_step = 30.0;  // s; also capped by the recycle delay
  double min_step = 1e-9;  // s
  double initial_step = 0.1;
  std::size_t max_steps = 50'000'000;
};

struct PlantConfig {
  KineticParams kinetics = KineticParams::williams_otto();
  // F1_sp [kg/s], F2_sp [kg/s], T_sp [K], L_sp [-], purge fraction [-].
  std::array<double, 5> nominal_inputs{1.8275, 4.2, 363.0, 0.5, 0.3};
  FlowsheetParams flowsheet{};
  ControllerSet controllers{};
  IntegratorOptions integrator{};

  void validate() const;
};

void to_json(nlohmann::json& j, const PlantConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, PlantConfig& c);
PlantConfig load_plant_config(const std::filesystem::path& path);

}  // namespace softsense::wo
