#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "softsense/wo/inputs.hpp"
#include "softsense/wo/params.hpp"

namespace softsense::excitation {

using wo::Input;
using wo::InputTrajectory;
using wo::PiecewiseConstant;

struct Bounds {
  double lo = -1e300;
  double hi = 1e300;
};

/// Manual load-change schedule: one step function per manipulated variable.
struct SetpointSchedule {
  InputTrajectory steps;
  std::array<Bounds, wo::kNumInputs> bounds{};

  /// Times strictly increasing, every value within its bounds.
  void validate() const;
};

/// APRBS on one manipulated variable. Levels are uniform in
/// [-amplitude, +amplitude] * nominal, holds uniform in [min_hold, max_hold].
struct AprbsSpec {
  Input variable = Input::F1;
  double amplitude = 0.0;  // fraction of nominal
  double nominal = 0.0;
  double min_hold = 60.0;   // s
  double max_hold = 600.0;  // s
  std::uint64_t seed = 0;

  void validate() const;
};

/// Zero-mean piecewise-constant signal over [0, horizon]. Hold times and the
/// unit-level draws depend only on the seed, so rescaling the amplitude
/// rescales the signal without moving its switching times.
PiecewiseConstant gen_aprbs(const AprbsSpec& spec, double horizon);

struct ClampEvent {
  Input variable = Input::F1;
  double time = 0.0;
  double requested = 0.0;
  double applied = 0.0;
};

struct AprbsSignal {
  Input variable = Input::F1;
  PiecewiseConstant signal;
  double horizon = 0.0;
};

struct ComposedTrajectory {
  InputTrajectory inputs;
  std::vector<ClampEvent> clamps;
};

/// Schedule plus APRBS overlays, clamped to the schedule bounds. Throws
/// std::invalid_argument when a signal's horizon differs from the schedule's.
ComposedTrajectory compose_trajectory(const SetpointSchedule& schedule,
                                      const std::vector<AprbsSignal>& signals);

struct TuneOptions {
  double probe_horizon = 10.0 * 3600.0;  // s
  double output_dt = 10.0;               // s
  double rel_tol = 0.1;
  int max_iterations = 40;
  double initial_scale = 1.0;
};

struct TuneProbe {
  double scale = 0.0;
  double fluctuation = 0.0;
};

struct TuneResult {
  std::vector<AprbsSpec> specs;  // amplitudes multiplied by `scale`
  double scale = 0.0;
  double fluctuation = 0.0;
  double target = 0.0;
  std::vector<TuneProbe> probes;  // in evaluation order
  /// Pairs of probes where a larger scale gave a smaller fluctuation.
  std::vector<std::pair<TuneProbe, TuneProbe>> monotonicity_violations;
};

/// Peak-to-peak of y relative to its value at the nominal steady state, over
/// a probe run from that steady state with only the APRBS overlay applied.
double probe_fluctuation(const std::vector<AprbsSpec>& specs, double scale,
                         const wo::PlantConfig& plant, const TuneOptions& options);

/// Bisection on a common amplitude scale so the y fluctuation lands within
/// rel_tol of `target`. Throws std::runtime_error with the bracket when it
/// does not converge.
TuneResult tune_amplitude(const std::vector<AprbsSpec>& specs, double target,
                          const wo::PlantConfig& plant, const TuneOptions& options = {});

/// A named operation trajectory: schedule, APRBS overlay and the tuning target.
struct TrajectoryConfig {
  std::string name;
  SetpointSchedule schedule;
  std::vector<AprbsSpec> aprbs;
  double target_fluctuation = 0.0;
};

/// Reads a trajectory config. Schedule step times are fractions of the
/// horizon; APRBS nominals default to the plant's nominal inputs.
TrajectoryConfig trajectory_config_from_json(const nlohmann::json& j, const wo::PlantConfig& plant,
                                             double horizon);
TrajectoryConfig load_trajectory_config(const std::filesystem::path& path,
                                        const wo::PlantConfig& plant, double horizon);

}  // namespace softsense::excitation
