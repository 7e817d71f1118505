#include "softsense/excitation/excitation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "softsense/common/json_util.hpp"
#include "softsense/common/rng.hpp"
#include "softsense/wo/simulator.hpp"

namespace softsense::excitation {

using nlohmann::json;

void SetpointSchedule::validate() const {
  for (std::size_t i = 0; i < wo::kNumInputs; ++i) {
    const auto& ch = steps.channels[i];
    ch.validate();
    const Bounds& b = bounds[i];
    if (!(b.lo <= b.hi))
      throw std::invalid_argument(std::string(wo::kInputNames[i]) + ": lower bound above upper bound");
    for (double v : ch.values)
      if (v < b.lo || v > b.hi)
        throw std::invalid_argument(std::string(wo::kInputNames[i]) + ": schedule value " +
                                    std::to_string(v) + " outside bounds");
  }
}

void AprbsSpec::validate() const {
  if (!(amplitude >= 0.0)) throw std::invalid_argument("APRBS amplitude must be nonnegative");
  if (!(min_hold > 0.0 && min_hold <= max_hold))
    throw std::invalid_argument("APRBS hold range must satisfy 0 < min_hold <= max_hold");
  if (!std::isfinite(nominal)) throw std::invalid_argument("APRBS nominal must be finite");
}

PiecewiseConstant gen_aprbs(const AprbsSpec& spec, double horizon) {
  spec.validate();
  if (!(horizon > 0.0)) throw std::invalid_argument("gen_aprbs: horizon must be positive");
  Rng rng(spec.seed);
  const double scale = spec.amplitude * spec.nominal;
  PiecewiseConstant out;
  double t = 0.0;
  while (t < horizon) {
    const double hold = rng.uniform(spec.min_hold, spec.max_hold);
    const double unit = rng.uniform(-1.0, 1.0);
    out.times.push_back(t);
    out.values.push_back(unit * scale);
    t += hold;
  }
  return out;
}

ComposedTrajectory compose_trajectory(const SetpointSchedule& schedule,
                                      const std::vector<AprbsSignal>& signals) {
  const double horizon = schedule.steps.horizon;
  for (const auto& s : signals) {
    if (s.horizon != horizon)
      throw std::invalid_argument("compose_trajectory: APRBS horizon " + std::to_string(s.horizon) +
                                  " differs from schedule horizon " + std::to_string(horizon));
    s.signal.validate();
  }
  ComposedTrajectory out;
  out.inputs.horizon = horizon;
  for (std::size_t i = 0; i < wo::kNumInputs; ++i) {
    const auto var = static_cast<Input>(i);
    const PiecewiseConstant& base = schedule.steps.channels[i];
    std::vector<const PiecewiseConstant*> overlays;
    std::vector<double> times = base.times;
    for (const auto& s : signals) {
      if (s.variable != var) continue;
      overlays.push_back(&s.signal);
      times.insert(times.end(), s.signal.times.begin(), s.signal.times.end());
    }
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    while (!times.empty() && times.back() >= horizon && times.size() > 1) times.pop_back();

    PiecewiseConstant& ch = out.inputs.channels[i];
    const Bounds& b = schedule.bounds[i];
    for (double t : times) {
      double v = base.at(t);
      for (const auto* o : overlays) v += o->at(t);
      const double applied = std::clamp(v, b.lo, b.hi);
      if (applied != v) out.clamps.push_back({var, t, v, applied});
      ch.times.push_back(t);
      ch.values.push_back(applied);
    }
  }
  return out;
}

namespace {

wo::InputVector nominal_of(const wo::PlantConfig& plant) {
  wo::InputVector u;
  std::copy(plant.nominal_inputs.begin(), plant.nominal_inputs.end(), u.begin());
  return u;
}

double fluctuation_from(const std::vector<AprbsSpec>& specs, double scale,
                        const wo::ProcessState& steady, const wo::PlantConfig& plant,
                        const TuneOptions& opt) {
  const wo::InputVector op = nominal_of(plant);
  SetpointSchedule schedule;
  schedule.steps = InputTrajectory::constant(op, opt.probe_horizon);
  schedule.bounds[static_cast<std::size_t>(Input::F1)] = {0.0, plant.flowsheet.f1_max};
  schedule.bounds[static_cast<std::size_t>(Input::F2)] = {0.0, plant.flowsheet.f2_max};
  schedule.bounds[static_cast<std::size_t>(Input::Level)] = {0.05, 0.95};
  schedule.bounds[static_cast<std::size_t>(Input::Purge)] = {0.0, 0.95};
  std::vector<AprbsSignal> signals;
  for (AprbsSpec s : specs) {
    s.amplitude *= scale;
    signals.push_back({s.variable, gen_aprbs(s, opt.probe_horizon), opt.probe_horizon});
  }
  const ComposedTrajectory traj = compose_trajectory(schedule, signals);
  const wo::SimulationResult r =
      wo::simulate(steady, traj.inputs, opt.probe_horizon, opt.output_dt, plant);
  const auto& y = r.trajectory.col("y");
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  const double y0 = y.front();
  if (!(y0 > 0.0)) throw std::runtime_error("probe_fluctuation: nominal quality is not positive");
  return (*hi - *lo) / y0;
}

}  // namespace

double probe_fluctuation(const std::vector<AprbsSpec>& specs, double scale,
                         const wo::PlantConfig& plant, const TuneOptions& options) {
  const wo::ProcessState steady = wo::find_steady_state(nominal_of(plant), plant);
  return fluctuation_from(specs, scale, steady, plant, options);
}

TuneResult tune_amplitude(const std::vector<AprbsSpec>& specs, double target,
                          const wo::PlantConfig& plant, const TuneOptions& opt) {
  if (!(target > 0.0 && target <= 0.2))
    throw std::invalid_argument("tune_amplitude: target must lie in (0, 0.2]");
  if (specs.empty()) throw std::invalid_argument("tune_amplitude: no APRBS signals to tune");
  for (const auto& s : specs) s.validate();
  if (!(opt.initial_scale > 0.0)) throw std::invalid_argument("tune_amplitude: initial scale must be positive");

  const wo::ProcessState steady = wo::find_steady_state(nominal_of(plant), plant);
  TuneResult res;
  res.target = target;
  int evaluations = 0;
  auto evaluate = [&](double scale) {
    ++evaluations;
    const TuneProbe p{scale, fluctuation_from(specs, scale, steady, plant, opt)};
    for (const auto& q : res.probes) {
      if (q.scale < p.scale && q.fluctuation > p.fluctuation) res.monotonicity_violations.push_back({q, p});
      if (q.scale > p.scale && q.fluctuation < p.fluctuation) res.monotonicity_violations.push_back({p, q});
    }
    res.probes.push_back(p);
    return p.fluctuation;
  };
  auto converged = [&](double f) { return std::abs(f - target) <= opt.rel_tol * target; };
  auto finish = [&](double scale, double f) {
    res.scale = scale;
    res.fluctuation = f;
    res.specs = specs;
    for (auto& s : res.specs) s.amplitude *= scale;
    return res;
  };

  double lo = 0.0;
  evaluate(lo);
  double hi = opt.initial_scale;
  double f_hi = evaluate(hi);
  while (f_hi < target) {
    if (converged(f_hi)) return finish(hi, f_hi);
    if (evaluations >= opt.max_iterations)
      throw std::runtime_error("tune_amplitude: no upper bracket found up to scale " + std::to_string(hi));
    lo = hi;
    hi *= 2.0;
    f_hi = evaluate(hi);
  }
  if (converged(f_hi)) return finish(hi, f_hi);

  while (evaluations < opt.max_iterations) {
    const double mid = 0.5 * (lo + hi);
    const double f = evaluate(mid);
    if (converged(f)) return finish(mid, f);
    if (f < target)
      lo = mid;
    else
      hi = mid;
  }
  std::ostringstream msg;
  msg << "tune_amplitude: no convergence to " << target << " within " << opt.max_iterations
      << " evaluations; bracket [" << lo << ", " << hi << "]";
  throw std::runtime_error(msg.str());
}

namespace {

Bounds bounds_from_json(const json& j, const std::string& name) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument("bounds." + name + " must be [lo, hi]");
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

TrajectoryConfig trajectory_config_from_json(const json& j, const wo::PlantConfig& plant,
                                             double horizon) {
  if (!(horizon > 0.0)) throw std::invalid_argument("trajectory horizon must be positive");
  reject_unknown(j, "trajectory", {"name", "target_fluctuation", "bounds", "schedule", "aprbs"});
  TrajectoryConfig cfg;
  cfg.name = j.value("name", std::string("unnamed"));
  read_optional(j, "target_fluctuation", cfg.target_fluctuation);
  const wo::InputVector op = nominal_of(plant);
  cfg.schedule.steps = InputTrajectory::constant(op, horizon);
  cfg.schedule.bounds[static_cast<std::size_t>(Input::F1)] = {0.0, plant.flowsheet.f1_max};
  cfg.schedule.bounds[static_cast<std::size_t>(Input::F2)] = {0.0, plant.flowsheet.f2_max};

  if (j.contains("bounds")) {
    for (const auto& [key, val] : j.at("bounds").items())
      cfg.schedule.bounds[static_cast<std::size_t>(wo::input_from_name(key))] = bounds_from_json(val, key);
  }
  if (j.contains("schedule")) {
    for (const auto& [key, val] : j.at("schedule").items()) {
      const auto i = static_cast<std::size_t>(wo::input_from_name(key));
      PiecewiseConstant ch;
      if (!val.is_array()) throw std::invalid_argument("schedule." + key + " must be a list of [fraction, value]");
      for (const auto& pt : val) {
        if (!pt.is_array() || pt.size() != 2)
          throw std::invalid_argument("schedule." + key + " entries must be [fraction, value]");
        const double frac = pt[0].get<double>();
        if (frac < 0.0 || frac >= 1.0)
          throw std::invalid_argument("schedule." + key + ": time fraction outside [0, 1)");
        ch.times.push_back(frac * horizon);
        ch.values.push_back(pt[1].get<double>());
      }
      if (ch.times.empty() || ch.times.front() != 0.0) {
        ch.times.insert(ch.times.begin(), 0.0);
        ch.values.insert(ch.values.begin(), op[i]);
      }
      cfg.schedule.steps.channels[i] = std::move(ch);
    }
  }
  cfg.schedule.validate();

  if (j.contains("aprbs")) {
    for (const auto& ja : j.at("aprbs")) {
      reject_unknown(ja, "aprbs[]", {"variable", "amplitude", "nominal", "min_hold", "max_hold", "seed"});
      AprbsSpec s;
      s.variable = wo::input_from_name(ja.at("variable").get<std::string>());
      s.nominal = op[static_cast<std::size_t>(s.variable)];
      read_optional(ja, "amplitude", s.amplitude);
      read_optional(ja, "nominal", s.nominal);
      read_optional(ja, "min_hold", s.min_hold);
      read_optional(ja, "max_hold", s.max_hold);
      read_optional(ja, "seed", s.seed);
      s.validate();
      cfg.aprbs.push_back(s);
    }
  }
  return cfg;
}

TrajectoryConfig load_trajectory_config(const std::filesystem::path& path, const wo::PlantConfig& plant,
                                        double horizon) {
  return trajectory_config_from_json(read_json_file(path), plant, horizon);
}

}  // namespace softsense::excitation
