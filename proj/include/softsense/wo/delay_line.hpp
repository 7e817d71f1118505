#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace softsense::wo {

/// How a DelayLine reconstructs values between buffered timestamps.
/// Hermite uses the slopes pushed with each sample (cubic, exact for
/// piecewise-linear signals as well); Linear ignores slopes.
enum class Interpolation { Linear, Hermite };

/// Pure transport delay: output(t) = input(t - delay).
///
/// Samples are pushed with nondecreasing timestamps. Repeating a timestamp
/// records a jump; queries landing exactly on it see the latest value
/// (right-continuous). Queries before the first sample return the fill value.
class DelayLine {
 public:
  DelayLine() = default;
  DelayLine(double delay, std::vector<double> fill, Interpolation rule = Interpolation::Linear);

  double delay() const { return delay_; }
  std::size_t width() const { return fill_.size(); }
  Interpolation rule() const { return rule_; }
  const std::vector<double>& fill() const { return fill_; }
  std::size_t buffered() const { return times_.size() - head_; }
  bool empty() const { return buffered() == 0; }
  double last_time() const;

  /// Throws std::invalid_argument on time regression or width mismatch.
  /// An empty `slope` is treated as zero.
  void push(double t, std::span<const double> value, std::span<const double> slope = {});

  /// Writes input(t - delay) into `out`. Throws std::out_of_range if t - delay
  /// lies beyond the newest buffered sample.
  void output(double t, std::span<double> out) const;
  void output_slope(double t, std::span<double> out) const;

  /// Scalar convenience: push (t, value) then return output(t).
  double push_pop(double t, double value);

  /// Drops samples that no query at time >= t_now can reach.
  void prune(double t_now);

 private:
  void lookup(double q, std::span<double> out, bool want_slope) const;

  double delay_ = 0.0;
  std::vector<double> fill_;
  Interpolation rule_ = Interpolation::Linear;
  std::size_t head_ = 0;
  std::vector<double> times_;
  std::vector<double> values_;  // width per sample
  std::vector<double> slopes_;  // width per sample
};

}  // namespace softsense::wo
