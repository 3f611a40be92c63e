#pragma once

// Single-machine infinite-bus model in the stationary (alpha-beta) frame.
//
//   J dω/dt = -K ω + Tm - Te,        dθ/dt = ω
//   L dI/dt = -R I - E + V
//   Te = -λ Re{I* j e^{jθ}},          E = λ j ω e^{jθ}
//
// Space vectors rotate counterclockwise (Clarke convention).

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include "smib/error.hpp"

namespace smib {

using Complex = std::complex<double>;

inline constexpr Complex kJ{0.0, 1.0};
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Default relative tolerance for membership in the co-energy manifold.
inline constexpr double kTolManifold = 1e-9;

namespace internal {
inline void require_positive(double value, const char* name) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw Error(ErrorKind::kInvalidParameter,
                std::string(name) + " > 0 violated (got " +
                    std::to_string(value) + ")");
  }
}
}  // namespace internal

/// Round-rotor machine with constant field flux and no damper winding.
struct MachineParams {
  double J{};       ///< inertia
  double K{};       ///< frequency droop / damping coefficient
  double Tm{};      ///< mechanical torque
  double L{};       ///< stator inductance
  double R{};       ///< stator resistance
  double lambda{};  ///< field flux magnitude

  void validate() const {
    internal::require_positive(J, "J");
    internal::require_positive(K, "K");
    internal::require_positive(Tm, "Tm");
    internal::require_positive(L, "L");
    internal::require_positive(R, "R");
    internal::require_positive(lambda, "lambda");
  }

  bool operator==(const MachineParams&) const = default;
};

/// Stiff grid: V(t) = v_mag e^{j(ω_s t + bus_phase0)}. v_mag is the
/// space-vector magnitude, i.e. sqrt(3) times the per-phase RMS voltage.
struct GridParams {
  double omega_s{};
  double v_mag{};
  double bus_phase0{0.0};

  void validate() const {
    internal::require_positive(omega_s, "omega_s");
    internal::require_positive(v_mag, "v_mag");
    if (!std::isfinite(bus_phase0)) {
      throw Error(ErrorKind::kInvalidParameter, "bus_phase0 must be finite");
    }
  }

  double period() const { return kTwoPi / omega_s; }

  bool operator==(const GridParams&) const = default;
};

enum class UnitMode { kSI, kPerUnit };

/// In per-unit mode the model equations are taken as already normalized;
/// omega_base only rescales η inside the dissipation margin.
struct UnitSystem {
  UnitMode mode{UnitMode::kPerUnit};
  double omega_base{kTwoPi * 60.0};

  void validate() const {
    if (mode == UnitMode::kPerUnit) {
      internal::require_positive(omega_base, "omega_base");
    }
  }

  /// Factor multiplying η wherever it enters the dissipation estimate.
  double eta_scale() const {
    return mode == UnitMode::kPerUnit ? omega_base : 1.0;
  }

  bool operator==(const UnitSystem&) const = default;
};

/// θ is stored unwrapped; only e^{jθ} matters to the certificate.
struct PhysicalState {
  double theta{};
  double omega{};
  Complex current{};

  bool finite() const {
    return std::isfinite(theta) && std::isfinite(omega) &&
           std::isfinite(current.real()) && std::isfinite(current.imag());
  }
};

struct StateDerivative {
  double dtheta{};
  double domega{};
  Complex dcurrent{};
};

/// Co-energy coordinates (jωξ, ξ, I) expressed relative to a reference phase.
struct EmbeddedState {
  Complex s1{};
  Complex s2{};
  Complex s3{};

  /// Rotor frequency recovered as s1 / (j s2).
  double omega() const { return (s1 / (kJ * s2)).real(); }

  bool on_manifold(double tol = kTolManifold) const {
    if (std::abs(std::abs(s2) - 1.0) > tol) return false;
    const Complex w = s1 / (kJ * s2);
    return std::abs(w.imag()) <= tol * std::max(1.0, std::abs(w.real()));
  }
};

inline Complex bus_voltage(double t, const GridParams& grid) {
  return std::polar(grid.v_mag, grid.omega_s * t + grid.bus_phase0);
}

inline double electrical_torque(const PhysicalState& x,
                                const MachineParams& m) {
  const Complex xi = std::polar(1.0, x.theta);
  return -m.lambda * (std::conj(x.current) * kJ * xi).real();
}

inline Complex emf(const PhysicalState& x, const MachineParams& m) {
  return m.lambda * kJ * x.omega * std::polar(1.0, x.theta);
}

/// Right-hand side for an arbitrary terminal voltage V.
inline StateDerivative dynamics_rhs_with_voltage(const PhysicalState& x,
                                                 const MachineParams& m,
                                                 Complex voltage) {
  const Complex xi = std::polar(1.0, x.theta);
  const double te = -m.lambda * (std::conj(x.current) * kJ * xi).real();
  const Complex e = m.lambda * kJ * x.omega * xi;
  return {x.omega, (-m.K * x.omega + m.Tm - te) / m.J,
          (-m.R * x.current - e + voltage) / m.L};
}

inline StateDerivative dynamics_rhs(double t, const PhysicalState& x,
                                    const MachineParams& m,
                                    const GridParams& grid) {
  return dynamics_rhs_with_voltage(x, m, bus_voltage(t, grid));
}

struct TerminalPower {
  double p{};
  double q{};
};

/// Power delivered at the terminal for inward current I: P + jQ = -I* V.
inline TerminalPower terminal_power(Complex current, Complex voltage) {
  const Complex s = std::conj(current) * voltage;
  return {-s.real(), -s.imag()};
}

/// Angle reduced to [-π, π).
inline double wrap_angle(double angle) {
  double a = std::remainder(angle, kTwoPi);
  if (a >= std::numbers::pi) a -= kTwoPi;
  return a;
}

/// Embeds a physical state into the co-energy coordinates. s1 is built from
/// s2, so the result lies on the manifold up to rounding.
inline EmbeddedState embed(const PhysicalState& x, double reference_phase) {
  const Complex s2 = std::polar(1.0, wrap_angle(x.theta - reference_phase));
  return {kJ * x.omega * s2, s2,
          x.current * std::polar(1.0, -reference_phase)};
}

}  // namespace smib
