#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "softsense/common/table.hpp"
#include "softsense/wo/delay_line.hpp"
#include "softsense/wo/flowsheet.hpp"
#include "softsense/wo/inputs.hpp"
#include "softsense/wo/params.hpp"

namespace softsense::wo {

struct ControllerStates {
  double flow1 = 0.0;
  double flow2 = 0.0;
  double level = 0.0;
  double temperature = 0.0;
};

/// T4 above the decomposition limit. `end` is NaN while the excursion is open.
struct ConstraintEvent {
  double start = 0.0;
  double end = 0.0;
  double peak_temperature = 0.0;
};

/// Full dynamic state of the flowsheet. The delay lines carry component
/// mass-flow streams: reactor outlet (to the decanter), decanter liquid (to
/// the column) and recycle (column to reactor).
struct ProcessState {
  ReactorState reactor{};
  std::array<double, 2> valves{};
  ControllerStates integrators{};
  DelayLine reactor_to_decanter;
  DelayLine decanter_to_column;
  DelayLine column_to_reactor;
  double clock = 0.0;
  bool above_limit = false;
  std::vector<ConstraintEvent> events;
};

/// Emitted trajectory columns, in file order.
inline constexpr std::array<std::string_view, 29> kTrajectoryColumns{
    "t",    "F1",   "F2",   "L",    "T4",   "FG",    "FD",    "FP",   "Q",    "y",
    "w_A",  "w_B",  "w_C",  "w_E",  "w_G",  "w_P",   "FR",    "Frec", "PP_A", "PP_B",
    "PP_C", "PP_E", "PP_G", "PP_P", "F1_sp", "F2_sp", "T_sp", "L_sp", "purge"};

struct SimulationStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

struct SimulationResult {
  Table trajectory;
  std::vector<ConstraintEvent> events;
  ProcessState final_state;
  SimulationStats stats;
};

class SimulationError : public std::runtime_error {
 public:
  SimulationError(const std::string& what, double time) : std::runtime_error(what), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

/// Integrates the closed loop from `initial.clock` for `horizon` seconds with
/// adaptive Dormand-Prince steps, stopping exactly at input jumps and their
/// transport-delayed echoes. States are emitted every `output_dt` seconds
/// from the integrator's dense output, so the output grid never influences
/// the integration path.
SimulationResult simulate(const ProcessState& initial, const InputTrajectory& inputs, double horizon,
                          double output_dt, const PlantConfig& config);

/// Steady state for constant inputs: damped Newton on the reactor balances
/// (with the recycle closed through the separators), falling back to a long
/// closed-loop simulation when Newton stalls. Delay lines are filled with the
/// steady streams. Throws std::runtime_error with the residual on failure.
ProcessState find_steady_state(const InputVector& operating_point, const PlantConfig& config);

/// Infinity norm of the full closed-loop time derivative at `state`.
double steady_state_residual(const ProcessState& state, const InputVector& operating_point,
                             const PlantConfig& config);

/// Reactor outlet stream leaving at `state` under `u` (level loop output times w).
Stream reactor_outlet(const ProcessState& state, const InputVector& u, const PlantConfig& config);

/// Time from `t_step` until `values` last leaves a band of `band_fraction`
/// times the total change around the final value. Empty when the signal did
/// not move or never left the band.
std::optional<double> settling_time(const std::vector<double>& times,
                                    const std::vector<double>& values, double t_step,
                                    double band_fraction = 0.02);

}  // namespace softsense::wo
