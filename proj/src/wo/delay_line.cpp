#include "softsense/wo/delay_line.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace softsense::wo {

DelayLine::DelayLine(double delay, std::vector<double> fill, Interpolation rule)
    : delay_(delay), fill_(std::move(fill)), rule_(rule) {
  if (!(delay >= 0.0)) throw std::invalid_argument("delay must be nonnegative");
  if (fill_.empty()) throw std::invalid_argument("delay line width must be at least 1");
}

double DelayLine::last_time() const {
  if (empty()) throw std::logic_error("delay line is empty");
  return times_.back();
}

void DelayLine::push(double t, std::span<const double> value, std::span<const double> slope) {
  const std::size_t w = width();
  if (value.size() != w) throw std::invalid_argument("delay line push: width mismatch");
  if (!slope.empty() && slope.size() != w)
    throw std::invalid_argument("delay line push: slope width mismatch");
  if (!empty() && t < times_.back())
    throw std::invalid_argument("delay line push: time regression from " +
                                std::to_string(times_.back()) + " to " + std::to_string(t));
  times_.push_back(t);
  values_.insert(values_.end(), value.begin(), value.end());
  if (slope.empty())
    slopes_.insert(slopes_.end(), w, 0.0);
  else
    slopes_.insert(slopes_.end(), slope.begin(), slope.end());
}

void DelayLine::output(double t, std::span<double> out) const { lookup(t - delay_, out, false); }

void DelayLine::output_slope(double t, std::span<double> out) const { lookup(t - delay_, out, true); }

double DelayLine::push_pop(double t, double value) {
  if (width() != 1) throw std::logic_error("push_pop requires a scalar delay line");
  push(t, std::span<const double>(&value, 1));
  double out = 0.0;
  output(t, std::span<double>(&out, 1));
  return out;
}

void DelayLine::lookup(double q, std::span<double> out, bool want_slope) const {
  const std::size_t w = width();
  if (out.size() != w) throw std::invalid_argument("delay line output: width mismatch");
  const auto first = times_.begin() + static_cast<std::ptrdiff_t>(head_);
  if (empty() || q < *first) {
    if (want_slope)
      std::fill(out.begin(), out.end(), 0.0);
    else
      std::copy(fill_.begin(), fill_.end(), out.begin());
    return;
  }
  // Stage times t + h - delay can overshoot the newest sample by rounding.
  if (q > times_.back() && q - times_.back() <= 1e-12 * std::max(1.0, std::abs(q))) q = times_.back();
  if (q > times_.back())
    throw std::out_of_range("delay line queried at " + std::to_string(q) +
                            " beyond newest sample " + std::to_string(times_.back()));
  // Last sample with time <= q; with repeated timestamps this is the newest.
  const auto it = std::upper_bound(first, times_.end(), q) - 1;
  const std::size_t i = static_cast<std::size_t>(it - times_.begin());
  const double* v0 = values_.data() + i * w;
  const double* d0 = slopes_.data() + i * w;
  if (*it == q || i + 1 == times_.size()) {
    if (want_slope)
      std::copy(d0, d0 + w, out.begin());
    else
      std::copy(v0, v0 + w, out.begin());
    return;
  }
  const double h = times_[i + 1] - times_[i];
  const double s = (q - times_[i]) / h;
  const double* v1 = v0 + w;
  const double* d1 = d0 + w;
  if (rule_ == Interpolation::Linear) {
    for (std::size_t k = 0; k < w; ++k)
      out[k] = want_slope ? (v1[k] - v0[k]) / h : v0[k] + s * (v1[k] - v0[k]);
    return;
  }
  const double s2 = s * s, s3 = s2 * s;
  if (!want_slope) {
    const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
    for (std::size_t k = 0; k < w; ++k)
      out[k] = h00 * v0[k] + h10 * h * d0[k] + h01 * v1[k] + h11 * h * d1[k];
  } else {
    const double g00 = 6 * s2 - 6 * s, g10 = 3 * s2 - 4 * s + 1;
    const double g01 = -6 * s2 + 6 * s, g11 = 3 * s2 - 2 * s;
    for (std::size_t k = 0; k < w; ++k)
      out[k] = (g00 * v0[k] + g01 * v1[k]) / h + g10 * d0[k] + g11 * d1[k];
  }
}

void DelayLine::prune(double t_now) {
  const double q = t_now - delay_;
  // Keep the newest sample at or before q; everything older is unreachable.
  std::size_t keep = head_;
  while (keep + 1 < times_.size() && times_[keep + 1] <= q) ++keep;
  head_ = keep;
  if (head_ > 4096 && head_ * 2 > times_.size()) {
    const std::size_t w = width();
    times_.erase(times_.begin(), times_.begin() + static_cast<std::ptrdiff_t>(head_));
    values_.erase(values_.begin(), values_.begin() + static_cast<std::ptrdiff_t>(head_ * w));
    slopes_.erase(slopes_.begin(), slopes_.begin() + static_cast<std::ptrdiff_t>(head_ * w));
    head_ = 0;
  }
}

}  // namespace softsense::wo
