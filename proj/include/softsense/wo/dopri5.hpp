#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>

namespace softsense::wo {

/// One Dormand-Prince 5(4) step with its continuous extension (Hairer's
/// 4th-order dense output). `f(t, y, dydt)` must be callable; `k1` is
/// f(t, y) (first-same-as-last from the previous accepted step).
template <std::size_t N>
struct Dopri5Step {
  using State = std::array<double, N>;

  double t = 0.0;
  double h = 0.0;
  State y0{};
  State y1{};
  State k7{};  // f(t + h, y1)
  double error = 0.0;  // weighted RMS, accept when <= 1
  std::array<State, 5> cont{};

  State dense(double tq) const {
    if (tq == t + h) return y1;
    const double s = (tq - t) / h;
    const double s1 = 1.0 - s;
    State out;
    for (std::size_t i = 0; i < N; ++i)
      out[i] = cont[0][i] + s * (cont[1][i] + s1 * (cont[2][i] + s * (cont[3][i] + s1 * cont[4][i])));
    return out;
  }
};

template <std::size_t N, typename F>
Dopri5Step<N> dopri5_step(F&& f, double t, const std::array<double, N>& y,
                          const std::array<double, N>& k1, double h, double rel_tol,
                          double abs_tol) {
  using State = std::array<double, N>;
  constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                   a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                   a65 = -5103.0 / 18656;
  constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                   a76 = 11.0 / 84;
  constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                   e6 = 22.0 / 525, e7 = -1.0 / 40;
  constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                   d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                   d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

  State k2, k3, k4, k5, k6, tmp;
  for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + h * a21 * k1[i];
  f(t + c2 * h, tmp, k2);
  for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
  f(t + c3 * h, tmp, k3);
  for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
  f(t + c4 * h, tmp, k4);
  for (std::size_t i = 0; i < N; ++i)
    tmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
  f(t + c5 * h, tmp, k5);
  for (std::size_t i = 0; i < N; ++i)
    tmp[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
  f(t + h, tmp, k6);

  Dopri5Step<N> step;
  step.t = t;
  step.h = h;
  step.y0 = y;
  for (std::size_t i = 0; i < N; ++i)
    step.y1[i] = y[i] + h * (a71 * k1[i] + a73 * k3[i] + a74 * k4[i] + a75 * k5[i] + a76 * k6[i]);
  f(t + h, step.y1, step.k7);

  double acc = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    const double err =
        h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * step.k7[i]);
    const double scale = abs_tol + rel_tol * std::max(std::abs(y[i]), std::abs(step.y1[i]));
    acc += (err / scale) * (err / scale);
  }
  step.error = std::sqrt(acc / static_cast<double>(N));

  for (std::size_t i = 0; i < N; ++i) {
    const double dy = step.y1[i] - y[i];
    const double bspl = h * k1[i] - dy;
    step.cont[0][i] = y[i];
    step.cont[1][i] = dy;
    step.cont[2][i] = bspl;
    step.cont[3][i] = dy - h * step.k7[i] - bspl;
    step.cont[4][i] = h * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] + d6 * k6[i] +
                           d7 * step.k7[i]);
  }
  return step;
}

}  // namespace softsense::wo
