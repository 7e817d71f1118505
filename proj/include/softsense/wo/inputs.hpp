#pragma once

#include <array>
#include <cstddef>
#include <string_view>
#include <vector>

namespace softsense::wo {

/// Manipulated variables: the two feed-flow setpoints, the reactor
/// temperature and level setpoints, and the purge split fraction.
enum class Input : std::size_t { F1 = 0, F2, Temperature, Level, Purge };
inline constexpr std::size_t kNumInputs = 5;
inline constexpr std::array<std::string_view, kNumInputs> kInputNames{"F1_sp", "F2_sp", "T_sp",
                                                                      "L_sp", "purge"};

Input input_from_name(std::string_view name);

using InputVector = std::array<double, kNumInputs>;

/// Right-continuous step function: value(t) = values[i] for times[i] <= t < times[i+1].
struct PiecewiseConstant {
  std::vector<double> times;
  std::vector<double> values;

  static PiecewiseConstant constant(double value) { return {{0.0}, {value}}; }

  double at(double t) const;
  /// Throws std::invalid_argument unless times are strictly increasing and
  /// start at 0 with one value per time.
  void validate() const;
};

struct InputTrajectory {
  std::array<PiecewiseConstant, kNumInputs> channels;
  double horizon = 0.0;

  static InputTrajectory constant(const InputVector& values, double horizon);

  InputVector at(double t) const;
  const PiecewiseConstant& channel(Input i) const { return channels[static_cast<std::size_t>(i)]; }
  PiecewiseConstant& channel(Input i) { return channels[static_cast<std::size_t>(i)]; }
  /// Sorted, de-duplicated times in (0, horizon) where any channel jumps.
  std::vector<double> change_times() const;
};

}  // namespace softsense::wo
