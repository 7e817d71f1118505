#include "softsense/wo/flowsheet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace softsense::wo {

double total(const Stream& s) {
  double sum = 0.0;
  for (double v : s) sum += v;
  return sum;
}

namespace {

void check_inlet(const Stream& inlet) {
  for (std::size_t i = 0; i < kNumComponents; ++i) {
    if (!std::isfinite(inlet[i]) || inlet[i] < 0.0)
      throw std::invalid_argument("separator inlet component " + std::string(kComponentNames[i]) +
                                  " flow is " + std::to_string(inlet[i]));
  }
}

// The P retained in the column bottoms, capped by the P available.
bool retention_limited_by_p(const Stream& inlet, const ColumnParams& column) {
  return column.p_retention_per_e * inlet[kE] > inlet[kP];
}

}  // namespace

SplitResult separator_split(const Stream& inlet, SeparatorUnit unit, const ColumnParams& column) {
  check_inlet(inlet);
  SplitResult out;
  if (unit == SeparatorUnit::Decanter) {
    out.top[kG] = inlet[kG];
    out.bottom = inlet;
    out.bottom[kG] = 0.0;
    return out;
  }
  for (std::size_t i = 0; i < kNumComponents; ++i) {
    if (i == kP) continue;
    out.top[i] = column.overhead_fraction[i] * inlet[i];
    out.bottom[i] = inlet[i] - out.top[i];
  }
  const double retained = std::min(column.p_retention_per_e * inlet[kE], inlet[kP]);
  out.bottom[kP] = retained;
  out.top[kP] = inlet[kP] - retained;
  return out;
}

SplitResult separator_split_tangent(const Stream& inlet, const Stream& d_inlet, SeparatorUnit unit,
                                    const ColumnParams& column) {
  SplitResult out;
  if (unit == SeparatorUnit::Decanter) {
    out.top[kG] = d_inlet[kG];
    out.bottom = d_inlet;
    out.bottom[kG] = 0.0;
    return out;
  }
  for (std::size_t i = 0; i < kNumComponents; ++i) {
    if (i == kP) continue;
    out.top[i] = column.overhead_fraction[i] * d_inlet[i];
    out.bottom[i] = d_inlet[i] - out.top[i];
  }
  const double d_retained =
      retention_limited_by_p(inlet, column) ? d_inlet[kP] : column.p_retention_per_e * d_inlet[kE];
  out.bottom[kP] = d_retained;
  out.top[kP] = d_inlet[kP] - d_retained;
  return out;
}

PurgeSplit purge_split(const Stream& bottoms, double purge_fraction) {
  if (!(purge_fraction >= 0.0 && purge_fraction <= 1.0))
    throw std::invalid_argument("purge fraction must lie in [0, 1], got " +
                                std::to_string(purge_fraction));
  PurgeSplit out;
  for (std::size_t i = 0; i < kNumComponents; ++i) {
    out.purge[i] = purge_fraction * bottoms[i];
    out.recycle[i] = bottoms[i] - out.purge[i];
  }
  return out;
}

ReactionRates reaction_rates(const ReactorState& s, const KineticParams& kinetics, double holdup,
                             bool suppress_product) {
  ReactionRates r;
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& rx = kinetics.reactions[k];
    if (rx.pre_exponential == 0.0) continue;
    r.rate[k] = rx.pre_exponential * std::exp(-rx.activation / s.temperature) * s.w[rx.first] *
                s.w[rx.second] * holdup;
    if (suppress_product && rx.stoich[kP] > 0.0) r.rate[k] = 0.0;
  }
  return r;
}

ReactorRates reactor_rhs(const ReactorState& state, std::span<const Inlet> inlets, double outflow,
                         double heat_duty, const KineticParams& kinetics,
                         const FlowsheetParams& flowsheet) {
  for (std::size_t i = 0; i < kNumComponents; ++i)
    if (!std::isfinite(state.w[i]))
      throw std::domain_error("reactor_rhs: non-finite mass fraction w_" +
                              std::string(kComponentNames[i]));
  if (!std::isfinite(state.temperature))
    throw std::domain_error("reactor_rhs: non-finite temperature");
  if (!std::isfinite(state.level)) throw std::domain_error("reactor_rhs: non-finite level");
  if (state.level <= 0.0)
    throw std::domain_error("reactor_rhs: non-positive level " + std::to_string(state.level));
  if (!std::isfinite(outflow)) throw std::domain_error("reactor_rhs: non-finite outflow");
  if (!std::isfinite(heat_duty)) throw std::domain_error("reactor_rhs: non-finite heat duty");

  const double holdup = state.level * flowsheet.holdup_capacity;
  const double cp = flowsheet.heat_capacity;
  const bool suppress = flowsheet.suppress_product_above_limit &&
                        state.temperature > flowsheet.constraint_temperature;
  const ReactionRates rates = reaction_rates(state, kinetics, holdup, suppress);

  std::array<double, kNumComponents> accumulation{};
  double f_in = 0.0;
  double sensible = 0.0;
  for (const Inlet& in : inlets) {
    const double f = total(in.flow);
    f_in += f;
    sensible += f * cp * (in.temperature - state.temperature);
    for (std::size_t i = 0; i < kNumComponents; ++i) accumulation[i] += in.flow[i];
  }
  double reaction_heat = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& rx = kinetics.reactions[k];
    for (std::size_t i = 0; i < kNumComponents; ++i) accumulation[i] += rx.stoich[i] * rates.rate[k];
    reaction_heat += rx.heat_release * rates.rate[k];
  }

  ReactorRates d;
  for (std::size_t i = 0; i < kNumComponents; ++i)
    d.w[i] = (accumulation[i] - f_in * state.w[i]) / holdup;
  d.temperature = (sensible + reaction_heat + heat_duty) / (holdup * cp);
  d.level = (f_in - outflow) / flowsheet.holdup_capacity;
  return d;
}

}  // namespace softsense::wo
