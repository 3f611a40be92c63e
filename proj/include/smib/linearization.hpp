#pragma once

// Linearization in the synchronously rotating frame. The real coordinates
//
//   z = [θ - ω̄t - φ0, ω, Re{I* e^{jω̄t}}, Im{I* e^{jω̄t}}]
//
// turn the periodic steady orbit into an equilibrium of an autonomous field.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>

#include "smib/eig4.hpp"
#include "smib/error.hpp"
#include "smib/model.hpp"
#include "smib/steady_state.hpp"

namespace smib {

using Vector4 = std::array<double, 4>;

struct LinearizationResult {
  Matrix4 jacobian{};
  std::array<Complex, 4> eigenvalues{};

  bool has_unstable_eigenvalue(double tol = 1e-6) const {
    return std::any_of(eigenvalues.begin(), eigenvalues.end(),
                       [tol](const Complex& l) { return l.real() >= tol; });
  }
};

inline Vector4 rotating_coords(const PhysicalState& x, double t,
                               const SteadyState& ss, const GridParams& grid) {
  const Complex q = std::conj(x.current) * std::polar(1.0, ss.omega_bar * t);
  return {x.theta - ss.omega_bar * t - grid.bus_phase0, x.omega, q.real(),
          q.imag()};
}

inline PhysicalState from_rotating_coords(const Vector4& z, double t,
                                          const SteadyState& ss,
                                          const GridParams& grid) {
  const Complex q(z[2], z[3]);
  return {z[0] + ss.omega_bar * t + grid.bus_phase0, z[1],
          std::conj(q * std::polar(1.0, -ss.omega_bar * t))};
}

/// dz/dt of the machine equations expressed in rotating coordinates.
inline Vector4 rotating_field(const Vector4& z, double t, const SteadyState& ss,
                              const MachineParams& m, const GridParams& grid) {
  const PhysicalState x = from_rotating_coords(z, t, ss, grid);
  const StateDerivative dx = dynamics_rhs(t, x, m, grid);
  const Complex rot = std::polar(1.0, ss.omega_bar * t);
  // d/dt (I* e^{jω̄t}) = (dI/dt)* e^{jω̄t} + jω̄ I* e^{jω̄t}
  const Complex dq = std::conj(dx.dcurrent) * rot +
                     kJ * ss.omega_bar * std::conj(x.current) * rot;
  return {dx.dtheta - ss.omega_bar, dx.domega, dq.real(), dq.imag()};
}

/// Central finite-difference Jacobian of the rotating-frame field at the
/// steady state. The field is checked for time invariance first.
inline Matrix4 jacobian_at(const SteadyState& ss, const MachineParams& m,
                           const GridParams& grid) {
  const Vector4 z0 = rotating_coords(ss.at(0.0, grid), 0.0, ss, grid);
  const double t1 = 0.37 * grid.period();

  Vector4 probe = z0;
  probe[0] += 0.1;
  probe[1] += 0.01;
  probe[2] += 0.05;
  for (const Vector4& z : {z0, probe}) {
    const Vector4 fa = rotating_field(z, 0.0, ss, m, grid);
    const Vector4 fb = rotating_field(z, t1, ss, m, grid);
    for (int i = 0; i < 4; ++i) {
      if (std::abs(fa[i] - fb[i]) > 1e-9 * std::max(1.0, std::abs(fa[i]))) {
        throw Error(ErrorKind::kNotAutonomous,
                    "rotating-frame field changes with time");
      }
    }
  }

  Matrix4 jac{};
  for (int k = 0; k < 4; ++k) {
    const double h = 1e-6 * std::max(1.0, std::abs(z0[k]));
    Vector4 zp = z0, zm = z0;
    zp[k] = z0[k] + h;
    zm[k] = z0[k] - h;
    const double span = zp[k] - zm[k];  // exact spacing actually used
    const Vector4 fp = rotating_field(zp, 0.0, ss, m, grid);
    const Vector4 fm = rotating_field(zm, 0.0, ss, m, grid);
    for (int i = 0; i < 4; ++i) jac[i][k] = (fp[i] - fm[i]) / span;
  }
  return jac;
}

inline LinearizationResult linearize(const SteadyState& ss,
                                     const MachineParams& m,
                                     const GridParams& grid) {
  LinearizationResult out;
  out.jacobian = jacobian_at(ss, m, grid);
  out.eigenvalues = eig4(out.jacobian);
  return out;
}

}  // namespace smib
