#pragma once

// Synchronous steady states: ω = ω_s, |I| constant, arg(I) advancing at ω_s.
//
// With the bus at phase zero the rotor leads by δ, ξ̄ = e^{jδ}, and the stator
// equation with dI/dt = jω_s I gives the current phasor in closed form:
//
//   Ī(δ) = (V̄ - λ j ω_s e^{jδ}) / (R + j ω_s L).
//
// Steady states are then the roots of the scalar torque balance
// g(δ) = Tm - K ω_s - Te(δ) on [-π, π).

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "smib/error.hpp"
#include "smib/model.hpp"

namespace smib {

inline constexpr double kTolBoundary = 1e-9;
inline constexpr int kDefaultScanCells = 720;

struct SteadyState {
  double omega_bar{};
  double delta{};   ///< rotor phase relative to the bus, in [-π, π)
  Complex xi_bar{};
  Complex i_bar{};  ///< current phasor in the synchronously rotating frame
  double p_bar{};
  double q_bar{};
  double re_ixi{};   ///< Re{Ī* ξ̄}
  double re_ijxi{};  ///< Re{Ī* j ξ̄}

  /// Rotor angle and current at time t along the periodic orbit.
  PhysicalState at(double t, const GridParams& grid) const {
    const double phase = grid.omega_s * t + grid.bus_phase0;
    return {phase + delta, omega_bar, i_bar * std::polar(1.0, phase)};
  }

  /// Co-energy coordinates of the orbit; identical for every t when the
  /// reference phase follows the bus.
  EmbeddedState embedded() const {
    return {kJ * omega_bar * xi_bar, xi_bar, i_bar};
  }
};

struct ExistenceReport {
  double p_script{};
  int count{};
};

namespace internal {

inline Complex steady_current(double delta, const MachineParams& m,
                              const GridParams& grid) {
  const double ws = grid.omega_s;
  return (Complex(grid.v_mag, 0.0) - m.lambda * kJ * ws * std::polar(1.0, delta)) /
         Complex(m.R, ws * m.L);
}

inline double torque_balance(double delta, const MachineParams& m,
                             const GridParams& grid) {
  const Complex i = steady_current(delta, m, grid);
  const double te = -m.lambda * (std::conj(i) * kJ * std::polar(1.0, delta)).real();
  return m.Tm - m.K * grid.omega_s - te;
}

inline double bisect_root(double a, double b, double ga, const MachineParams& m,
                          const GridParams& grid, double tol) {
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (a + b);
    const double gm = torque_balance(mid, m, grid);
    if (std::abs(gm) < tol || mid == a || mid == b) return mid;
    if ((gm < 0.0) == (ga < 0.0)) {
      a = mid;
      ga = gm;
    } else {
      b = mid;
    }
  }
  return 0.5 * (a + b);
}

/// Golden-section search for the extremum of g on [a, b]; `sign` = +1 finds
/// a minimum of g, -1 a maximum.
inline double golden_extremum(double a, double b, double sign,
                              const MachineParams& m, const GridParams& grid) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = sign * torque_balance(c, m, grid);
  double fd = sign * torque_balance(d, m, grid);
  for (int it = 0; it < 200 && (b - a) > 1e-15; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = sign * torque_balance(c, m, grid);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = sign * torque_balance(d, m, grid);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace internal

/// Closed-form existence indicator and the 0/1/2 steady-state count.
inline ExistenceReport existence_indicator(const MachineParams& m,
                                           const GridParams& grid) {
  const double ws = grid.omega_s;
  const double z2 = m.L * m.L * ws * ws + m.R * m.R;
  const double num = -m.lambda * m.lambda * ws * m.R + (m.Tm - m.K * ws) * z2;
  const double den = m.lambda * grid.v_mag * std::sqrt(z2);
  const double p = num / den;
  int count = 0;
  if (std::abs(std::abs(p) - 1.0) <= kTolBoundary) {
    count = 1;
  } else if (std::abs(p) < 1.0) {
    count = 2;
  }
  return {p, count};
}

/// Builds a fully populated steady state from a rotor phase δ.
inline SteadyState make_steady_state(double delta, const MachineParams& m,
                                     const GridParams& grid) {
  SteadyState ss;
  ss.omega_bar = grid.omega_s;
  ss.delta = wrap_angle(delta);
  ss.xi_bar = std::polar(1.0, ss.delta);
  ss.i_bar = internal::steady_current(ss.delta, m, grid);
  const auto pq = terminal_power(ss.i_bar, Complex(grid.v_mag, 0.0));
  ss.p_bar = pq.p;
  ss.q_bar = pq.q;
  ss.re_ixi = (std::conj(ss.i_bar) * ss.xi_bar).real();
  ss.re_ijxi = (std::conj(ss.i_bar) * kJ * ss.xi_bar).real();
  return ss;
}

/// Violation of the torque balance and of the phasor stator equation.
inline double steady_residual(const SteadyState& ss, const MachineParams& m,
                              const GridParams& grid) {
  const double ws = grid.omega_s;
  const double te = -m.lambda * (std::conj(ss.i_bar) * kJ * ss.xi_bar).real();
  const double torque = std::abs(-m.K * ws + m.Tm - te);
  const double stator = std::abs(Complex(m.R, ws * m.L) * ss.i_bar +
                                 m.lambda * kJ * ws * ss.xi_bar -
                                 Complex(grid.v_mag, 0.0));
  return std::max(torque, stator);
}

/// All synchronous steady states, sorted by δ ascending.
///
/// Roots are bracketed by a uniform scan of g(δ) followed by bisection. A
/// pair of roots closer than one scan cell is recovered by locating the
/// extremum of g inside the cell. At the tangency |𝒫| = 1 the single double
/// root is located by minimizing |g|.
inline std::vector<SteadyState> solve_steady_states(
    const MachineParams& m, const GridParams& grid,
    int scan_cells = kDefaultScanCells) {
  m.validate();
  grid.validate();
  const ExistenceReport existence = existence_indicator(m, grid);
  const double tol = 1e-12 * std::max(m.Tm, m.K * grid.omega_s);
  const double pi = std::numbers::pi;
  const double cell = kTwoPi / scan_cells;

  std::vector<double> deltas(scan_cells + 1);
  std::vector<double> values(scan_cells + 1);
  for (int i = 0; i <= scan_cells; ++i) {
    deltas[i] = -pi + i * cell;
    values[i] = internal::torque_balance(deltas[i], m, grid);
  }

  std::vector<double> roots;
  if (existence.count == 1) {
    // g = A + B cos(δ - δ0) touches zero at its extremum closest to zero.
    const auto best = std::min_element(
        values.begin(), values.end() - 1,
        [](double a, double b) { return std::abs(a) < std::abs(b); });
    const int i = static_cast<int>(best - values.begin());
    const double sign = *best > 0.0 ? 1.0 : -1.0;
    roots.push_back(internal::golden_extremum(deltas[i] - cell, deltas[i] + cell,
                                              sign, m, grid));
  } else {
    for (int i = 0; i < scan_cells; ++i) {
      const double ga = values[i];
      const double gb = values[i + 1];
      if (ga == 0.0) {
        roots.push_back(deltas[i]);
      } else if ((ga < 0.0) != (gb < 0.0) && gb != 0.0) {
        roots.push_back(
            internal::bisect_root(deltas[i], deltas[i + 1], ga, m, grid, tol));
      }
    }
    if (static_cast<int>(roots.size()) < existence.count) {
      // Both roots may sit inside one cell: split the cell at the extremum.
      for (int i = 0; i < scan_cells && roots.size() < 2; ++i) {
        const int prev = (i + scan_cells - 1) % scan_cells;
        const double gi = values[i];
        const bool local_min = gi <= values[prev] && gi <= values[i + 1];
        const bool local_max = gi >= values[prev] && gi >= values[i + 1];
        if (!local_min && !local_max) continue;
        const double sign = local_min ? 1.0 : -1.0;
        const double lo = deltas[i] - cell;
        const double hi = deltas[i] + cell;
        const double ext = internal::golden_extremum(lo, hi, sign, m, grid);
        const double gext = internal::torque_balance(ext, m, grid);
        const double glo = internal::torque_balance(lo, m, grid);
        const double ghi = internal::torque_balance(hi, m, grid);
        if ((gext < 0.0) != (glo < 0.0) && (gext < 0.0) != (ghi < 0.0)) {
          roots.clear();
          roots.push_back(internal::bisect_root(lo, ext, glo, m, grid, tol));
          roots.push_back(internal::bisect_root(ext, hi, gext, m, grid, tol));
        }
      }
    }
  }

  if (static_cast<int>(roots.size()) != existence.count) {
    throw Error(ErrorKind::kCountMismatch,
                "scan found " + std::to_string(roots.size()) +
                    " roots but the existence indicator (P = " +
                    std::to_string(existence.p_script) + ") predicts " +
                    std::to_string(existence.count));
  }

  std::vector<SteadyState> out;
  out.reserve(roots.size());
  for (double d : roots) out.push_back(make_steady_state(d, m, grid));
  std::sort(out.begin(), out.end(),
            [](const SteadyState& a, const SteadyState& b) {
              return a.delta < b.delta;
            });
  return out;
}

}  // namespace smib
