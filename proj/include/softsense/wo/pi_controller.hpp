#pragma once

#include <algorithm>

#include "softsense/wo/params.hpp"

namespace softsense::wo {

/// u = clamp(bias + kp e + ki I), e = setpoint - measurement.
/// Reverse-acting loops use negative gains.
struct PIController {
  double kp = 0.0;
  double ki = 0.0;
  double setpoint = 0.0;
  double integrator = 0.0;
  double bias = 0.0;
  double u_min = 0.0;
  double u_max = 1.0;
  bool anti_windup = true;

  static PIController from_tuning(const PITuning& t, double setpoint, double integrator = 0.0) {
    return {t.kp, t.ki, setpoint, integrator, t.bias, t.u_min, t.u_max, t.anti_windup};
  }

  double error(double measurement) const { return setpoint - measurement; }

  double unclamped(double measurement, double integral) const {
    return bias + kp * error(measurement) + ki * integral;
  }

  double output(double measurement) const {
    return std::clamp(unclamped(measurement, integrator), u_min, u_max);
  }

  bool saturated(double measurement) const {
    const double u = unclamped(measurement, integrator);
    return u > u_max || u < u_min;
  }

  /// dI/dt for continuous-time use. With anti-windup, integration stops
  /// while the output is saturated and the error would push it further.
  double integrator_rate(double measurement) const {
    const double e = error(measurement);
    if (anti_windup && winds_up(unclamped(measurement, integrator), e)) return 0.0;
    return e;
  }

  /// Discrete update: I += e dt (subject to anti-windup), then output.
  double step(double measurement, double dt) {
    const double e = error(measurement);
    const double candidate = integrator + e * dt;
    if (!(anti_windup && winds_up(unclamped(measurement, candidate), e))) integrator = candidate;
    return output(measurement);
  }

 private:
  bool winds_up(double u, double e) const {
    return (u > u_max && ki * e > 0.0) || (u < u_min && ki * e < 0.0);
  }
};

}  // namespace softsense::wo
