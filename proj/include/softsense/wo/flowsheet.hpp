#pragma once

#include <array>
#include <span>

#include "softsense/wo/params.hpp"

namespace softsense::wo {

/// Component mass flows [kg/s], indexed by Component.
using Stream = std::array<double, kNumComponents>;

double total(const Stream& s);

enum class SeparatorUnit { Decanter, Column };

/// `top` is the stream leaving the unit (PG for the decanter, PP for the
/// column); `bottom` carries on (to the column, or to purge/recycle).
struct SplitResult {
  Stream top{};
  Stream bottom{};
};

/// Ideal separators. The decanter removes all G; the column sends P
/// (minus retention) and the configured overhead fractions to PP.
/// Throws std::invalid_argument on a negative or non-finite component.
SplitResult separator_split(const Stream& inlet, SeparatorUnit unit, const ColumnParams& column);

/// Directional derivative of separator_split along `d_inlet` (the split is
/// piecewise linear; the active branch of the P retention is used).
SplitResult separator_split_tangent(const Stream& inlet, const Stream& d_inlet, SeparatorUnit unit,
                                    const ColumnParams& column);

struct PurgeSplit {
  Stream purge{};
  Stream recycle{};
};
PurgeSplit purge_split(const Stream& bottoms, double purge_fraction);

/// Reactor mass fractions (A, B, C, E, G, P), temperature T4 [K] and
/// level L as a fraction of holdup capacity.
struct ReactorState {
  std::array<double, kNumComponents> w{};
  double temperature = 0.0;
  double level = 0.0;
};

/// Time derivatives of a ReactorState, same layout.
using ReactorRates = ReactorState;

struct Inlet {
  Stream flow{};
  double temperature = 0.0;
};

struct ReactionRates {
  std::array<double, 3> rate{};  // kg/s
};

ReactionRates reaction_rates(const ReactorState& s, const KineticParams& kinetics, double holdup,
                             bool suppress_product = false);

/// CSTR balances:
///   M dw_i/dt = sum_in s_i - F_in w_i + sum_r nu_ri r_r
///   M cp dT/dt = sum_in F cp (T_in - T) + sum_r h_r r_r + Q
///   dL/dt = (F_in - outflow) / capacity
/// with M = L * capacity. Throws std::domain_error naming a non-finite field
/// or a non-positive level.
ReactorRates reactor_rhs(const ReactorState& state, std::span<const Inlet> inlets, double outflow,
                         double heat_duty, const KineticParams& kinetics,
                         const FlowsheetParams& flowsheet);

}  // namespace softsense::wo
