#include "softsense/wo/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "softsense/wo/dopri5.hpp"
#include "softsense/wo/pi_controller.hpp"

namespace softsense::wo {

namespace {

// ODE state layout.
constexpr std::size_t kT = 6, kL = 7, kV1 = 8, kV2 = 9, kIF1 = 10, kIF2 = 11, kIL = 12, kIT = 13;
constexpr std::size_t kN = 14;
using Vec = std::array<double, kN>;

Vec pack(const ProcessState& s) {
  Vec y{};
  for (std::size_t i = 0; i < kNumComponents; ++i) y[i] = s.reactor.w[i];
  y[kT] = s.reactor.temperature;
  y[kL] = s.reactor.level;
  y[kV1] = s.valves[0];
  y[kV2] = s.valves[1];
  y[kIF1] = s.integrators.flow1;
  y[kIF2] = s.integrators.flow2;
  y[kIL] = s.integrators.level;
  y[kIT] = s.integrators.temperature;
  return y;
}

void unpack(const Vec& y, ProcessState& s) {
  for (std::size_t i = 0; i < kNumComponents; ++i) s.reactor.w[i] = y[i];
  s.reactor.temperature = y[kT];
  s.reactor.level = y[kL];
  s.valves = {y[kV1], y[kV2]};
  s.integrators = {y[kIF1], y[kIF2], y[kIL], y[kIT]};
}

ReactorState reactor_of(const Vec& y) {
  ReactorState r;
  for (std::size_t i = 0; i < kNumComponents; ++i) r.w[i] = y[i];
  r.temperature = y[kT];
  r.level = y[kL];
  return r;
}

// Controllers and actuators evaluated at one state/input pair.
struct Loops {
  PIController flow1, flow2, level, temperature;
  double f1 = 0.0, f2 = 0.0, outflow = 0.0, heat = 0.0;
};

Loops evaluate_loops(const Vec& y, const InputVector& u, const PlantConfig& cfg) {
  const auto& c = cfg.controllers;
  const auto& fs = cfg.flowsheet;
  Loops l;
  l.flow1 = PIController::from_tuning(c.flow1, u[0], y[kIF1]);
  l.flow2 = PIController::from_tuning(c.flow2, u[1], y[kIF2]);
  l.temperature = PIController::from_tuning(c.temperature, u[2], y[kIT]);
  l.level = PIController::from_tuning(c.level, u[3], y[kIL]);
  l.f1 = fs.f1_max * y[kV1];
  l.f2 = fs.f2_max * y[kV2];
  l.outflow = l.level.output(y[kL]);
  l.heat = l.temperature.output(y[kT]);
  return l;
}

Stream pure(Component c, double flow) {
  Stream s{};
  s[c] = flow;
  return s;
}

// dy/dt given the recycle stream arriving at the reactor.
void plant_rhs(const Vec& y, const InputVector& u, const Stream& recycle, const PlantConfig& cfg,
               Vec& dy) {
  const auto& fs = cfg.flowsheet;
  const Loops l = evaluate_loops(y, u, cfg);
  const std::array<Inlet, 3> inlets{Inlet{pure(kA, l.f1), fs.feed_temperature},
                                    Inlet{pure(kB, l.f2), fs.feed_temperature},
                                    Inlet{recycle, fs.recycle_temperature}};
  const ReactorRates d = reactor_rhs(reactor_of(y), inlets, l.outflow, l.heat, cfg.kinetics, fs);
  for (std::size_t i = 0; i < kNumComponents; ++i) dy[i] = d.w[i];
  dy[kT] = d.temperature;
  dy[kL] = d.level;
  dy[kV1] = (l.flow1.output(l.f1) - y[kV1]) / fs.valve_time_constant;
  dy[kV2] = (l.flow2.output(l.f2) - y[kV2]) / fs.valve_time_constant;
  dy[kIF1] = l.flow1.integrator_rate(l.f1);
  dy[kIF2] = l.flow2.integrator_rate(l.f2);
  dy[kIL] = l.level.integrator_rate(y[kL]);
  dy[kIT] = l.temperature.integrator_rate(y[kT]);
}

// Reactor outlet stream and its time derivative.
std::pair<Stream, Stream> outlet_with_slope(const Vec& y, const Vec& dy, const InputVector& u,
                                            const PlantConfig& cfg) {
  const Loops l = evaluate_loops(y, u, cfg);
  double d_outflow = 0.0;
  if (!l.level.saturated(y[kL])) d_outflow = -l.level.kp * dy[kL] + l.level.ki * dy[kIL];
  Stream s{}, ds{};
  for (std::size_t i = 0; i < kNumComponents; ++i) {
    s[i] = l.outflow * y[i];
    ds[i] = d_outflow * y[i] + l.outflow * dy[i];
  }
  return {s, ds};
}

struct ColumnOutputs {
  SplitResult split;
  PurgeSplit purge;
};

ColumnOutputs column_outputs(const Stream& feed, double purge_fraction, const PlantConfig& cfg) {
  ColumnOutputs out;
  out.split = separator_split(feed, SeparatorUnit::Column, cfg.flowsheet.column);
  out.purge = purge_split(out.split.bottom, purge_fraction);
  return out;
}

// Pushes the current outlet into the reactor->decanter line and propagates
// the (delayed) streams through the separators into the downstream lines.
void push_streams(ProcessState& s, double t, const Stream& outlet, const Stream& d_outlet,
                  double purge_fraction, const PlantConfig& cfg) {
  s.reactor_to_decanter.push(t, outlet, d_outlet);

  Stream dec_in{}, d_dec_in{};
  s.reactor_to_decanter.output(t, dec_in);
  s.reactor_to_decanter.output_slope(t, d_dec_in);
  const auto& col = cfg.flowsheet.column;
  const SplitResult dec = separator_split(dec_in, SeparatorUnit::Decanter, col);
  const SplitResult d_dec = separator_split_tangent(dec_in, d_dec_in, SeparatorUnit::Decanter, col);
  s.decanter_to_column.push(t, dec.bottom, d_dec.bottom);

  Stream col_in{}, d_col_in{};
  s.decanter_to_column.output(t, col_in);
  s.decanter_to_column.output_slope(t, d_col_in);
  const SplitResult c = separator_split(col_in, SeparatorUnit::Column, col);
  const SplitResult dc = separator_split_tangent(col_in, d_col_in, SeparatorUnit::Column, col);
  const PurgeSplit p = purge_split(c.bottom, purge_fraction);
  Stream d_recycle{};
  for (std::size_t i = 0; i < kNumComponents; ++i) d_recycle[i] = (1.0 - purge_fraction) * dc.bottom[i];
  s.column_to_reactor.push(t, p.recycle, d_recycle);
}

void emit_row(Table& out, double t, const Vec& y, const InputVector& u, const ProcessState& s,
              const PlantConfig& cfg) {
  const Loops l = evaluate_loops(y, u, cfg);
  Stream dec_in{}, col_in{}, rec{};
  s.reactor_to_decanter.output(t, dec_in);
  s.decanter_to_column.output(t, col_in);
  s.column_to_reactor.output(t, rec);
  const ColumnOutputs c = column_outputs(col_in, u[4], cfg);
  const double fp = total(c.split.top);
  const double quality = fp > 0.0 ? c.split.top[kP] / fp : 0.0;

  std::size_t k = 0;
  auto put = [&](double v) { out.columns[k++].push_back(v); };
  put(t);
  put(l.f1);
  put(l.f2);
  put(y[kL]);
  put(y[kT]);
  put(dec_in[kG]);
  put(total(c.purge.purge));
  put(fp);
  put(l.heat);
  put(quality);
  for (std::size_t i = 0; i < kNumComponents; ++i) put(y[i]);
  put(l.outflow);
  put(total(rec));
  for (std::size_t i = 0; i < kNumComponents; ++i) put(c.split.top[i]);
  for (double v : u) put(v);
}

std::vector<double> breakpoints(const InputTrajectory& inputs, double t0, double t_end,
                                const FlowsheetParams& fs) {
  const double d1 = fs.delay_reactor_decanter, d2 = fs.delay_decanter_column,
               d3 = fs.delay_column_reactor;
  std::vector<double> out;
  for (double c : inputs.change_times())
    for (double shift : {0.0, d1, d1 + d2, d3, d1 + d2 + d3})
      if (c + shift > t0 && c + shift < t_end) out.push_back(c + shift);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  out.push_back(t_end);
  return out;
}

// Crossing time of the temperature limit inside an accepted step.
double locate_crossing(const Dopri5Step<kN>& step, double limit) {
  double lo = step.t, hi = step.t + step.h;
  const bool rising = step.y0[kT] <= limit;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    const bool above = step.dense(mid)[kT] > limit;
    if (above == rising)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

ProcessState state_at(const ReactorState& r, double outflow, const InputVector& op,
                      const PlantConfig& cfg);

}  // namespace

Stream reactor_outlet(const ProcessState& state, const InputVector& u, const PlantConfig& config) {
  const Loops l = evaluate_loops(pack(state), u, config);
  Stream s{};
  for (std::size_t i = 0; i < kNumComponents; ++i) s[i] = l.outflow * state.reactor.w[i];
  return s;
}

SimulationResult simulate(const ProcessState& initial, const InputTrajectory& inputs, double horizon,
                          double output_dt, const PlantConfig& config) {
  if (!(horizon > 0.0)) throw std::invalid_argument("simulate: horizon must be positive");
  if (!(output_dt > 0.0)) throw std::invalid_argument("simulate: output_dt must be positive");
  const double t0 = initial.clock;
  const double t_end = t0 + horizon;
  if (inputs.horizon + 1e-9 < t_end)
    throw std::invalid_argument("simulate: inputs cover [0, " + std::to_string(inputs.horizon) +
                                "] but the run ends at " + std::to_string(t_end));
  const auto& opt = config.integrator;
  const double max_step = std::min(opt.max_step, config.flowsheet.delay_column_reactor);

  SimulationResult result;
  ProcessState s = initial;
  Table& out = result.trajectory;
  for (auto name : kTrajectoryColumns) out.names.emplace_back(name);
  out.columns.resize(out.names.size());
  out.t0 = t0;
  out.dt = output_dt;
  const auto n_out = static_cast<std::size_t>(std::floor(horizon / output_dt + 1e-9)) + 1;
  for (auto& c : out.columns) c.reserve(n_out);
  std::size_t next_out = 0;
  auto out_time = [&](std::size_t i) { return t0 + static_cast<double>(i) * output_dt; };

  Vec y = pack(s);
  double t = t0;
  double h = std::min(opt.initial_step, max_step);
  const double limit = config.flowsheet.constraint_temperature;

  InputVector u = inputs.at(t);
  for (double seg_end : breakpoints(inputs, t0, t_end, config.flowsheet)) {
    u = inputs.at(t);
    auto rhs = [&](double tt, const Vec& yy, Vec& dd) {
      Stream rec{};
      s.column_to_reactor.output(tt, rec);
      plant_rhs(yy, u, rec, config, dd);
    };
    Vec k1;
    try {
      rhs(t, y, k1);
    } catch (const std::exception& e) {
      throw SimulationError(std::string("simulate: ") + e.what() + " at t=" + std::to_string(t), t);
    }
    {
      const auto [outlet, d_outlet] = outlet_with_slope(y, k1, u, config);
      push_streams(s, t, outlet, d_outlet, u[4], config);
    }
    if (next_out == 0) {
      emit_row(out, out_time(0), y, u, s, config);
      next_out = 1;
    }

    while (t < seg_end) {
      if (result.stats.accepted + result.stats.rejected >= opt.max_steps)
        throw SimulationError("simulate: step budget exhausted at t=" + std::to_string(t), t);
      const bool last = t + h >= seg_end;
      const double h_try = last ? seg_end - t : h;
      Dopri5Step<kN> step;
      bool ok = true;
      try {
        step = dopri5_step<kN>(rhs, t, y, k1, h_try, opt.rel_tol, opt.abs_tol);
        for (double v : step.y1) ok = ok && std::isfinite(v);
        ok = ok && std::isfinite(step.error);
      } catch (const std::domain_error&) {
        ok = false;
      } catch (const std::invalid_argument&) {
        ok = false;
      }
      if (!ok || step.error > 1.0) {
        ++result.stats.rejected;
        const double fac = ok ? std::max(0.2, 0.9 * std::pow(step.error, -0.2)) : 0.25;
        h = h_try * fac;
        if (h < opt.min_step)
          throw SimulationError("simulate: step size underflow at t=" + std::to_string(t), t);
        continue;
      }
      ++result.stats.accepted;
      const double t_new = last ? seg_end : t + h_try;
      step.h = t_new - t;
      {
        const auto [outlet, d_outlet] = outlet_with_slope(step.y1, step.k7, u, config);
        try {
          push_streams(s, t_new, outlet, d_outlet, u[4], config);
        } catch (const std::exception& e) {
          throw SimulationError(std::string("simulate: ") + e.what() + " at t=" + std::to_string(t_new),
                                t_new);
        }
      }
      while (next_out < n_out && out_time(next_out) <= t_new + 1e-9 * output_dt) {
        const double to = std::min(out_time(next_out), t_new);
        emit_row(out, out_time(next_out), to == t_new ? step.y1 : step.dense(to), u, s, config);
        ++next_out;
      }
      // Constraint monitoring on the accepted step.
      const double temp_new = step.y1[kT];
      if (!s.above_limit && temp_new > limit) {
        s.above_limit = true;
        s.events.push_back({locate_crossing(step, limit), std::numeric_limits<double>::quiet_NaN(), temp_new});
      } else if (s.above_limit) {
        auto& ev = s.events.back();
        ev.peak_temperature = std::max(ev.peak_temperature, temp_new);
        if (temp_new <= limit) {
          s.above_limit = false;
          ev.end = locate_crossing(step, limit);
        }
      }

      const double fac = std::min(5.0, 0.9 * std::pow(std::max(step.error, 1e-10), -0.2));
      if (!last) h = std::min(h_try * fac, max_step);
      t = t_new;
      y = step.y1;
      k1 = step.k7;
      s.reactor_to_decanter.prune(t);
      s.decanter_to_column.prune(t);
      s.column_to_reactor.prune(t);
    }
  }
  unpack(y, s);
  s.clock = t_end;
  result.events = s.events;
  result.final_state = std::move(s);
  return result;
}

namespace {

struct SteadyResidual {
  Eigen::Matrix<double, 7, 1> r;
  bool valid = true;
};

// Unknowns: the six reactor mass fractions and the reactor outflow.
SteadyResidual steady_balance(const Eigen::Matrix<double, 7, 1>& x, const InputVector& op,
                              const PlantConfig& cfg) {
  SteadyResidual res;
  ReactorState r;
  for (std::size_t i = 0; i < kNumComponents; ++i) r.w[i] = x[static_cast<Eigen::Index>(i)];
  r.temperature = op[2];
  r.level = op[3];
  const double outflow = x[6];
  Stream outlet{};
  for (std::size_t i = 0; i < kNumComponents; ++i) {
    if (r.w[i] < 0.0) res.valid = false;
    outlet[i] = outflow * std::max(r.w[i], 0.0);
  }
  if (outflow < 0.0) res.valid = false;
  if (!res.valid) return res;
  const auto& col = cfg.flowsheet.column;
  const SplitResult dec = separator_split(outlet, SeparatorUnit::Decanter, col);
  const ColumnOutputs c = column_outputs(dec.bottom, op[4], cfg);
  const double holdup = r.level * cfg.flowsheet.holdup_capacity;
  const ReactionRates rates = reaction_rates(r, cfg.kinetics, holdup);
  double sum_w = 0.0;
  for (std::size_t i = 0; i < kNumComponents; ++i) {
    double acc = c.purge.recycle[i] - outflow * r.w[i];
    if (i == kA) acc += op[0];
    if (i == kB) acc += op[1];
    for (std::size_t k = 0; k < 3; ++k) acc += cfg.kinetics.reactions[k].stoich[i] * rates.rate[k];
    res.r[static_cast<Eigen::Index>(i)] = acc;
    sum_w += r.w[i];
  }
  res.r[6] = sum_w - 1.0;
  return res;
}

bool newton_solve(Eigen::Matrix<double, 7, 1>& x, const InputVector& op, const PlantConfig& cfg,
                  double& residual_norm) {
  using V7 = Eigen::Matrix<double, 7, 1>;
  SteadyResidual f = steady_balance(x, op, cfg);
  if (!f.valid) return false;
  for (int iter = 0; iter < 200; ++iter) {
    residual_norm = f.r.lpNorm<Eigen::Infinity>();
    if (residual_norm < 1e-13) return true;
    Eigen::Matrix<double, 7, 7> jac;
    for (int j = 0; j < 7; ++j) {
      const double step = 1e-7 * std::max(1.0, std::abs(x[j]));
      V7 xp = x, xm = x;
      xp[j] += step;
      xm[j] -= step;
      const SteadyResidual fp = steady_balance(xp, op, cfg);
      const SteadyResidual fm = steady_balance(xm, op, cfg);
      if (fp.valid && fm.valid)
        jac.col(j) = (fp.r - fm.r) / (2.0 * step);
      else if (fp.valid)
        jac.col(j) = (fp.r - f.r) / step;
      else
        return false;
    }
    const V7 dx = jac.colPivHouseholderQr().solve(-f.r);
    if (!dx.allFinite()) return false;
    // Fraction-to-boundary, then backtrack on the residual norm.
    double lambda = 1.0;
    for (int i = 0; i < 7; ++i)
      if (x[i] + dx[i] < 0.0) lambda = std::min(lambda, 0.9 * x[i] / -dx[i]);
    bool accepted = false;
    for (int bt = 0; bt < 40; ++bt) {
      const V7 xn = x + lambda * dx;
      const SteadyResidual fn = steady_balance(xn, op, cfg);
      if (fn.valid && fn.r.lpNorm<Eigen::Infinity>() < (1.0 - 1e-4 * lambda) * residual_norm) {
        x = xn;
        f = fn;
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!accepted) {
      residual_norm = f.r.lpNorm<Eigen::Infinity>();
      return residual_norm < 1e-11;
    }
  }
  residual_norm = f.r.lpNorm<Eigen::Infinity>();
  return residual_norm < 1e-11;
}

ProcessState state_at(const ReactorState& r, double outflow, const InputVector& op,
                      const PlantConfig& cfg) {
  const auto& fs = cfg.flowsheet;
  const auto& c = cfg.controllers;
  auto integrator_for = [](const PITuning& t, double u, const char* loop) {
    if (t.ki == 0.0) throw std::runtime_error(std::string("steady state needs integral action in the ") + loop + " loop");
    if (u < t.u_min || u > t.u_max)
      throw std::runtime_error(std::string("operating point saturates the ") + loop + " loop (u=" +
                               std::to_string(u) + ")");
    return (u - t.bias) / t.ki;
  };

  ProcessState s;
  s.reactor = r;
  s.valves = {op[0] / fs.f1_max, op[1] / fs.f2_max};
  s.integrators.flow1 = integrator_for(c.flow1, s.valves[0], "F1 flow");
  s.integrators.flow2 = integrator_for(c.flow2, s.valves[1], "F2 flow");
  s.integrators.level = integrator_for(c.level, outflow, "level");

  Stream outlet{};
  for (std::size_t i = 0; i < kNumComponents; ++i) outlet[i] = outflow * r.w[i];
  const SplitResult dec = separator_split(outlet, SeparatorUnit::Decanter, fs.column);
  const ColumnOutputs col = column_outputs(dec.bottom, op[4], cfg);

  // Heat duty closing the energy balance at T = T_sp.
  const std::array<Inlet, 3> inlets{Inlet{pure(kA, op[0]), fs.feed_temperature},
                                    Inlet{pure(kB, op[1]), fs.feed_temperature},
                                    Inlet{col.purge.recycle, fs.recycle_temperature}};
  const ReactorRates d0 = reactor_rhs(r, inlets, outflow, 0.0, cfg.kinetics, fs);
  const double heat = -d0.temperature * r.level * fs.holdup_capacity * fs.heat_capacity;
  s.integrators.temperature = integrator_for(c.temperature, heat, "temperature");

  const auto as_vec = [](const Stream& st) { return std::vector<double>(st.begin(), st.end()); };
  s.reactor_to_decanter = DelayLine(fs.delay_reactor_decanter, as_vec(outlet), Interpolation::Hermite);
  s.decanter_to_column = DelayLine(fs.delay_decanter_column, as_vec(dec.bottom), Interpolation::Hermite);
  s.column_to_reactor = DelayLine(fs.delay_column_reactor, as_vec(col.purge.recycle), Interpolation::Hermite);
  s.clock = 0.0;
  return s;
}

}  // namespace

double steady_state_residual(const ProcessState& state, const InputVector& operating_point,
                             const PlantConfig& config) {
  const Vec y = pack(state);
  Stream rec{};
  state.column_to_reactor.output(state.clock, rec);
  Vec dy{};
  plant_rhs(y, operating_point, rec, config, dy);
  double norm = 0.0;
  for (double v : dy) norm = std::max(norm, std::abs(v));
  return norm;
}

ProcessState find_steady_state(const InputVector& op, const PlantConfig& config) {
  config.validate();
  if (!(op[3] > 0.0 && op[3] <= 1.0))
    throw std::invalid_argument("operating point level setpoint must lie in (0, 1]");
  if (!(op[0] >= 0.0 && op[1] >= 0.0)) throw std::invalid_argument("feed flows must be nonnegative");
  if (op[0] > config.flowsheet.f1_max || op[1] > config.flowsheet.f2_max)
    throw std::invalid_argument("feed flow setpoint exceeds valve capacity");

  Eigen::Matrix<double, 7, 1> x;
  x << 0.1, 0.35, 0.02, 0.3, 0.08, 0.15, 4.0 * (op[0] + op[1]);
  double residual = std::numeric_limits<double>::infinity();
  bool converged = newton_solve(x, op, config, residual);

  if (!converged) {
    // Fallback: run the closed loop from the initial guess, then polish.
    ReactorState r;
    r.w = {0.1, 0.35, 0.02, 0.3, 0.08, 0.15};
    r.temperature = op[2];
    r.level = op[3];
    const ProcessState guess = state_at(r, 4.0 * (op[0] + op[1]), op, config);
    const double span = 20.0 * 3600.0;
    const SimulationResult sim = simulate(guess, InputTrajectory::constant(op, span), span, 600.0, config);
    const auto& fin = sim.final_state;
    for (std::size_t i = 0; i < kNumComponents; ++i) x[static_cast<Eigen::Index>(i)] = fin.reactor.w[i];
    x[6] = reactor_outlet(fin, op, config)[kA] / std::max(fin.reactor.w[kA], 1e-300);
    converged = newton_solve(x, op, config, residual);
  }
  if (!converged)
    throw std::runtime_error("find_steady_state: no convergence, residual " + std::to_string(residual));

  ReactorState r;
  for (std::size_t i = 0; i < kNumComponents; ++i) r.w[i] = x[static_cast<Eigen::Index>(i)];
  r.temperature = op[2];
  r.level = op[3];
  ProcessState s = state_at(r, x[6], op, config);
  const double res = steady_state_residual(s, op, config);
  if (!(res < 1e-10))
    throw std::runtime_error("find_steady_state: closed-loop residual " + std::to_string(res) +
                             " exceeds 1e-10");
  return s;
}

std::optional<double> settling_time(const std::vector<double>& times,
                                    const std::vector<double>& values, double t_step,
                                    double band_fraction) {
  if (times.size() != values.size() || times.empty())
    throw std::invalid_argument("settling_time: mismatched or empty series");
  auto it = std::lower_bound(times.begin(), times.end(), t_step);
  if (it == times.end()) return std::nullopt;
  const std::size_t k0 = static_cast<std::size_t>(it - times.begin());
  const double initial = values[k0 > 0 ? k0 - 1 : 0];
  const double final_value = values.back();
  const double band = band_fraction * std::abs(final_value - initial);
  if (band == 0.0) return std::nullopt;
  std::optional<double> last_out;
  for (std::size_t k = k0; k < values.size(); ++k)
    if (std::abs(values[k] - final_value) > band) last_out = times[k];
  if (!last_out) return std::nullopt;
  return *last_out - t_step;
}

}  // namespace softsense::wo
