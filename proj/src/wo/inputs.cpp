#include "softsense/wo/inputs.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace softsense::wo {

Input input_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumInputs; ++i)
    if (kInputNames[i] == name) return static_cast<Input>(i);
  throw std::invalid_argument("unknown manipulated variable: " + std::string(name));
}

double PiecewiseConstant::at(double t) const {
  if (times.empty()) throw std::logic_error("empty piecewise-constant signal");
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return values.front();
  return values[static_cast<std::size_t>(it - times.begin()) - 1];
}

void PiecewiseConstant::validate() const {
  if (times.empty() || times.size() != values.size())
    throw std::invalid_argument("piecewise-constant signal needs one value per time point");
  if (times.front() != 0.0) throw std::invalid_argument("piecewise-constant signal must start at t = 0");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1]))
      throw std::invalid_argument("piecewise-constant times must be strictly increasing");
  for (double v : values)
    if (!std::isfinite(v)) throw std::invalid_argument("piecewise-constant value is not finite");
}

InputTrajectory InputTrajectory::constant(const InputVector& values, double horizon) {
  InputTrajectory traj;
  traj.horizon = horizon;
  for (std::size_t i = 0; i < kNumInputs; ++i) traj.channels[i] = PiecewiseConstant::constant(values[i]);
  return traj;
}

InputVector InputTrajectory::at(double t) const {
  InputVector u{};
  for (std::size_t i = 0; i < kNumInputs; ++i) u[i] = channels[i].at(t);
  return u;
}

std::vector<double> InputTrajectory::change_times() const {
  std::vector<double> out;
  for (const auto& ch : channels)
    for (std::size_t i = 1; i < ch.times.size(); ++i)
      if (ch.times[i] > 0.0 && ch.times[i] < horizon && ch.values[i] != ch.values[i - 1])
        out.push_back(ch.times[i]);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace softsense::wo
