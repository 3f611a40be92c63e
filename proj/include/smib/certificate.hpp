#pragma once

// Shifted-passivity certificate for a synchronous steady state.
//
// Storage, with ξ = e^{jθ} and all quantities in the bus reference frame:
//
//   S = ½ J ‖jωξ - jω̄ξ̄‖² + ½ L ‖I - Ī‖² + ½ (η - J ω̄² + λ Re{Ī*ξ̄}) ‖ξ - ξ̄‖²
//
// Dissipation estimate: dS/dt ≤ -vᵀ Q(ω) v + ⟨I - Ī, V - V̄⟩ with
// v = (|ω - ω̄|, ‖ξ - ξ̄‖, ‖I - Ī‖).
//
// In per-unit mode η is multiplied by ω_base inside the dissipation margin K̂
// and the off-diagonal of Q; the storage coefficient uses η as given.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <string>
#include <string_view>

#include "smib/eig4.hpp"
#include "smib/error.hpp"
#include "smib/model.hpp"
#include "smib/steady_state.hpp"
#include "smib/trajectory.hpp"

namespace smib {

using QMatrix = Matrix3;

enum class Verdict { kCertifiedLocal, kCertifiedROA, kInconclusive };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::kCertifiedLocal: return "CertifiedLocal";
    case Verdict::kCertifiedROA: return "CertifiedROA";
    case Verdict::kInconclusive: return "Inconclusive";
  }
  return "Inconclusive";
}

struct Certificate {
  double eta{};
  double k_hat{};
  double c{};
  bool cond_inertia{};
  bool cond_khat{};
  bool cond_c{};
  bool cond_local{};
  bool cond_roa{};
  // Decay radius quantities; NaN unless the dissipation assumption holds.
  double rho{std::numeric_limits<double>::quiet_NaN()};
  double rho_hat{std::numeric_limits<double>::quiet_NaN()};
  double roa_level{std::numeric_limits<double>::quiet_NaN()};
  Verdict verdict{Verdict::kInconclusive};

  bool assumption_holds() const { return cond_inertia && cond_khat && cond_c; }
};

/// ⟨a, b⟩ = Re{a* b}
inline double inner(Complex a, Complex b) { return (std::conj(a) * b).real(); }

namespace internal {
inline void require_manifold(const EmbeddedState& s, const char* which) {
  if (!s.on_manifold()) {
    throw Error(ErrorKind::kManifoldViolation,
                std::string(which) + " is not on the co-energy manifold");
  }
}
}  // namespace internal

inline double storage(const EmbeddedState& s, const EmbeddedState& s_bar,
                      double eta, const MachineParams& m) {
  internal::require_manifold(s, "state");
  internal::require_manifold(s_bar, "reference");
  const double w_bar = s_bar.omega();
  const double coef =
      eta - m.J * w_bar * w_bar + m.lambda * inner(s_bar.s3, s_bar.s2);
  return 0.5 * m.J * std::norm(s.s1 - s_bar.s1) +
         0.5 * m.L * std::norm(s.s3 - s_bar.s3) +
         0.5 * coef * std::norm(s.s2 - s_bar.s2);
}

/// Storage of a physical state at time t relative to the steady orbit.
inline double storage_at(const PhysicalState& x, double t,
                         const SteadyState& ss, double eta,
                         const MachineParams& m, const GridParams& grid) {
  return storage(embed(x, grid.omega_s * t + grid.bus_phase0), ss.embedded(),
                 eta, m);
}

inline QMatrix q_matrix(double omega, const SteadyState& ss,
                        const MachineParams& m, double eta_scaled) {
  const double wb = ss.omega_bar;
  const double d = m.K * wb * omega - m.lambda * wb * std::abs(ss.i_bar) -
                   m.Tm * (omega - wb) / 2.0;
  QMatrix q{};
  q[0] = {m.K - m.J * wb, -eta_scaled / 2.0, 0.0};
  q[1] = {-eta_scaled / 2.0, d, -m.lambda * wb / 2.0};
  q[2] = {0.0, -m.lambda * wb / 2.0, m.R};
  return q;
}

/// Cholesky with strictly positive pivots; an exact zero pivot is not PD.
template <std::size_t N>
bool is_positive_definite(const Matrix<N>& q) {
  Matrix<N> l{};
  for (std::size_t j = 0; j < N; ++j) {
    double diag = q[j][j];
    for (std::size_t k = 0; k < j; ++k) diag -= l[j][k] * l[j][k];
    if (!(diag > 0.0)) return false;
    l[j][j] = std::sqrt(diag);
    for (std::size_t i = j + 1; i < N; ++i) {
      double s = q[i][j];
      for (std::size_t k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
      l[i][j] = s / l[j][j];
    }
  }
  return true;
}

/// vᵀ Q(ω) v for the state's distance vector.
inline double dissipation_form(const EmbeddedState& s, const SteadyState& ss,
                               const MachineParams& m, double eta_scaled) {
  const EmbeddedState sb = ss.embedded();
  const std::array<double, 3> v{std::abs(s.s1 / s.s2 - sb.s1 / sb.s2),
                                std::abs(s.s2 - sb.s2), std::abs(s.s3 - sb.s3)};
  const QMatrix q = q_matrix(s.omega(), ss, m, eta_scaled);
  double out = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) out += v[i] * q[i][j] * v[j];
  }
  return out;
}

struct AssumptionCheck {
  double k_hat{};
  double c{};
  bool cond_inertia{};
  bool cond_khat{};
  bool cond_c{};
  /// Kω̄² - Jω̄³ <= 0; K̂ is then reported as -inf.
  bool degenerate{};

  bool holds() const { return cond_inertia && cond_khat && cond_c; }
};

namespace internal {
/// K - λ‖Ī‖/ω̄ - λ²/(4R): the η-free part of K̂.
inline double k_hat_base(const MachineParams& m, const SteadyState& ss) {
  return m.K - m.lambda * std::abs(ss.i_bar) / ss.omega_bar -
         m.lambda * m.lambda / (4.0 * m.R);
}

inline double inertia_margin(const MachineParams& m, const SteadyState& ss) {
  const double w = ss.omega_bar;
  return m.K * w * w - m.J * w * w * w;
}
}  // namespace internal

inline AssumptionCheck check_assumption(const MachineParams& m,
                                        const SteadyState& ss, double eta,
                                        const UnitSystem& units) {
  if (eta < 0.0) {
    throw Error(ErrorKind::kInvalidParameter, "eta must be >= 0");
  }
  AssumptionCheck out;
  const double w = ss.omega_bar;
  const double denom = internal::inertia_margin(m, ss);
  const double eta_eff = units.eta_scale() * eta;
  out.c = 1.0 - m.K * w / m.Tm;
  out.cond_inertia = m.K > m.J * w;
  if (denom <= 0.0) {
    out.degenerate = true;
    out.cond_inertia = false;
    out.k_hat = -std::numeric_limits<double>::infinity();
  } else {
    out.k_hat = internal::k_hat_base(m, ss) - eta_eff * eta_eff / (4.0 * denom);
  }
  out.cond_khat = out.k_hat > 0.0;
  out.cond_c = out.c < 0.5;
  return out;
}

enum class EtaMode { kLocal, kROA };

/// Feasible η: raw_lower < η < upper, η >= 0.
struct EtaInterval {
  double lower{};      ///< raw lower bound clamped at 0
  double upper{};      ///< sup{η >= 0 : K̂(η) > 0}; NaN if none exists
  double raw_lower{};  ///< unclamped lower bound (strict inequality)
  bool empty{true};

  bool contains(double eta) const {
    return !empty && eta >= 0.0 && eta > raw_lower && eta < upper;
  }

  /// 0 when feasible, otherwise the midpoint.
  double pick() const { return contains(0.0) ? 0.0 : 0.5 * (lower + upper); }
};

inline EtaInterval eta_bounds(const MachineParams& m, const SteadyState& ss,
                              const UnitSystem& units, EtaMode mode) {
  const double w = ss.omega_bar;
  EtaInterval out;
  out.raw_lower = -m.lambda * ss.re_ixi;
  if (mode == EtaMode::kROA) out.raw_lower += m.J * w * w;
  out.lower = std::max(out.raw_lower, 0.0);
  const double base = internal::k_hat_base(m, ss);
  const double inertia = internal::inertia_margin(m, ss);
  if (base > 0.0 && inertia > 0.0) {
    out.upper = (2.0 / units.eta_scale()) * std::sqrt(base * inertia);
    out.empty = !(out.lower < out.upper);
  } else {
    out.upper = std::numeric_limits<double>::quiet_NaN();
    out.empty = true;
  }
  return out;
}

struct DecayRadius {
  double rho{};
  double rho_hat{};
  double roa_level{};
};

inline DecayRadius decay_radius(const MachineParams& m, const SteadyState& ss,
                                double eta, const UnitSystem& units) {
  const AssumptionCheck a = check_assumption(m, ss, eta, units);
  if (!a.holds()) {
    throw Error(ErrorKind::kAssumptionViolated,
                std::string("dissipation assumption fails:") +
                    (a.cond_inertia ? "" : " K <= J*omega_bar") +
                    (a.cond_khat ? "" : " K_hat <= 0") +
                    (a.cond_c ? "" : " c >= 1/2"));
  }
  const double w = ss.omega_bar;
  DecayRadius out;
  out.rho = a.k_hat * w * w / (m.K * w - m.Tm / 2.0);
  out.rho_hat = std::min(out.rho, w);
  out.roa_level = m.J * out.rho_hat * out.rho_hat / 2.0;
  return out;
}

/// Samples Q(ω) on (ω̄ - ρ, ω̄ + 10ρ] and checks it is PD there, and that it
/// stops being PD just below ω̄ - ρ. False if the assumption does not hold.
inline bool q_pd_on_halfline(const MachineParams& m, const SteadyState& ss,
                             double eta, const UnitSystem& units,
                             int samples) {
  if (!check_assumption(m, ss, eta, units).holds()) return false;
  const DecayRadius dr = decay_radius(m, ss, eta, units);
  const double eta_s = units.eta_scale() * eta;
  const double lo = ss.omega_bar - dr.rho + 1e-9;
  const double hi = ss.omega_bar + 10.0 * dr.rho;
  for (int k = 1; k <= samples; ++k) {
    const double w = lo + (hi - lo) * static_cast<double>(k) / samples;
    if (!is_positive_definite(q_matrix(w, ss, m, eta_s))) return false;
  }
  if (!is_positive_definite(q_matrix(lo, ss, m, eta_s))) return false;
  const double below = ss.omega_bar - dr.rho - 1e-6 * dr.rho;
  return !is_positive_definite(q_matrix(below, ss, m, eta_s));
}

/// Local chart of the manifold around the steady state:
/// s2 = e^{jφ} ξ̄, s1 = jω s2, s3 = Ī + z.
struct LocalCoords {
  double phi{};
  double domega{};
  Complex z{};
};

inline EmbeddedState from_local(const LocalCoords& c, const SteadyState& ss) {
  const Complex s2 = std::polar(1.0, c.phi) * ss.xi_bar;
  return {kJ * (ss.omega_bar + c.domega) * s2, s2, ss.i_bar + c.z};
}

inline LocalCoords to_local(const PhysicalState& x, double t,
                            const SteadyState& ss, const GridParams& grid) {
  const double ref = grid.omega_s * t + grid.bus_phase0;
  return {wrap_angle(x.theta - ref - ss.delta), x.omega - ss.omega_bar,
          x.current * std::polar(1.0, -ref) - ss.i_bar};
}

struct HessianCheck {
  bool positive{};
  double r{};                     ///< η + λ Re{Ī*ξ̄}
  double min_eig_estimate{};      ///< smallest eigenvalue of the FD Hessian
  std::array<double, 4> fd_eigenvalues{};
  bool consistent{};              ///< FD spectrum matches {r, J, L, L}
};

/// Second variation of the storage at the steady state in (φ, δω, Re z, Im z).
/// Analytic form is diag(r, J, L, L); a central finite-difference Hessian
/// (step 1e-4) is compared against it within 5 % (or 5e-4 absolute).
inline HessianCheck hessian_positive(const SteadyState& ss, double eta,
                                     const MachineParams& m) {
  HessianCheck out;
  out.r = eta + m.lambda * ss.re_ixi;
  const double h = 1e-4;
  const EmbeddedState sb = ss.embedded();
  auto f = [&](const std::array<double, 4>& u) {
    return storage(from_local({u[0], u[1], Complex(u[2], u[3])}, ss), sb, eta,
                   m);
  };
  Matrix4 hess{};
  const std::array<double, 4> zero{};
  const double f0 = f(zero);
  for (int i = 0; i < 4; ++i) {
    for (int j = i; j < 4; ++j) {
      double val = 0.0;
      if (i == j) {
        auto up = zero, dn = zero;
        up[i] = h;
        dn[i] = -h;
        val = (f(up) - 2.0 * f0 + f(dn)) / (h * h);
      } else {
        auto pp = zero, pm = zero, mp = zero, mm = zero;
        pp[i] = h; pp[j] = h;
        pm[i] = h; pm[j] = -h;
        mp[i] = -h; mp[j] = h;
        mm[i] = -h; mm[j] = -h;
        val = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * h * h);
      }
      hess[i][j] = val;
      hess[j][i] = val;
    }
  }
  const auto ev = eig4(hess);
  for (int i = 0; i < 4; ++i) out.fd_eigenvalues[i] = ev[i].real();
  out.min_eig_estimate = out.fd_eigenvalues[0];

  std::array<double, 4> expected{out.r, m.J, m.L, m.L};
  std::sort(expected.begin(), expected.end());
  out.consistent = true;
  for (int i = 0; i < 4; ++i) {
    const double err = std::abs(out.fd_eigenvalues[i] - expected[i]);
    if (err > std::max(0.05 * std::abs(expected[i]), 5e-4)) {
      out.consistent = false;
    }
  }
  out.positive = out.r > 0.0 && out.min_eig_estimate > 0.0 && out.consistent;
  return out;
}

/// Full certificate. Without an explicit η the ROA interval is tried first,
/// then the local one; inside an interval η = 0 is preferred, else the
/// midpoint. With no feasible interval η = 0 is reported.
inline Certificate certify(const MachineParams& m, const GridParams& grid,
                           const SteadyState& ss, const UnitSystem& units,
                           std::optional<double> eta = std::nullopt) {
  m.validate();
  grid.validate();
  units.validate();
  Certificate cert;
  if (eta) {
    cert.eta = *eta;
  } else {
    const EtaInterval roa = eta_bounds(m, ss, units, EtaMode::kROA);
    const EtaInterval local = eta_bounds(m, ss, units, EtaMode::kLocal);
    if (!roa.empty) {
      cert.eta = roa.pick();
    } else if (!local.empty) {
      cert.eta = local.pick();
    } else {
      cert.eta = 0.0;
    }
  }
  const AssumptionCheck a = check_assumption(m, ss, cert.eta, units);
  const double w = ss.omega_bar;
  cert.k_hat = a.k_hat;
  cert.c = a.c;
  cert.cond_inertia = a.cond_inertia;
  cert.cond_khat = a.cond_khat;
  cert.cond_c = a.cond_c;
  cert.cond_local = cert.eta > -m.lambda * ss.re_ixi;
  cert.cond_roa = cert.eta > -m.lambda * ss.re_ixi + m.J * w * w;
  if (a.holds()) {
    const DecayRadius dr = decay_radius(m, ss, cert.eta, units);
    cert.rho = dr.rho;
    cert.rho_hat = dr.rho_hat;
    cert.roa_level = dr.roa_level;
    if (cert.cond_roa) {
      cert.verdict = Verdict::kCertifiedROA;
    } else if (cert.cond_local) {
      cert.verdict = Verdict::kCertifiedLocal;
    }
  }
  return cert;
}

// ---------------------------------------------------------------------------
// Port-Hamiltonian structure and energy-balance identities.

/// Residual between the dissipative part of the vector field assembled from
/// the machine equations and its port-Hamiltonian form (𝐉 - 𝐑)∇H + 𝐆u, with
/// x = (J jωξ, L I) and ∇H = (jωξ, I).
inline double ph_consistency(const PhysicalState& x, const MachineParams& m,
                             const GridParams& grid, double t) {
  const Complex xi = std::polar(1.0, x.theta);
  const Complex v = bus_voltage(t, grid);
  const double w = x.omega;
  const double w_bar = grid.omega_s;
  const Complex i = x.current;

  // Direct: J d/dt(jωξ) = jξ (J dω/dt) - J ω² ξ with J dω/dt from the
  // torque-free swing part; L dI/dt from the stator.
  const double j_domega = -m.K * w + m.lambda * inner(i, kJ * xi);
  const Complex dx1 = kJ * xi * j_domega - m.J * w * w * xi;
  const Complex dx2 = -m.R * i - m.lambda * kJ * w * xi + v;

  const Complex g1 = kJ * w * xi;
  const Complex g2 = i;
  const Complex u1 = v;
  const Complex u2 = -m.J * (w - w_bar) * w * xi;
  const Complex u3 = -m.lambda * inner(i, xi) * xi;
  const Complex ph1 =
      (kJ * w_bar * m.J - m.K) * g1 + m.lambda * g2 + u2 + u3;
  const Complex ph2 = -m.lambda * g1 - m.R * g2 + u1;
  return std::sqrt(std::norm(dx1 - ph1) + std::norm(dx2 - ph2));
}

/// Right-hand side of the raw shifted energy balance for the dissipative
/// field; `dv` = V - V̄ is the supply perturbation.
inline double raw_balance_rhs(const EmbeddedState& s, const EmbeddedState& sb,
                              Complex dv, const MachineParams& m) {
  const double w = s.omega();
  const double wb = sb.omega();
  const Complex xi = s.s2, xib = sb.s2, i = s.s3, ib = sb.s3;
  const Complex dg1 = kJ * w * xi - kJ * wb * xib;
  const Complex dg2 = i - ib;
  const double dissip = m.K * std::norm(dg1) + m.R * std::norm(dg2);
  return -dissip + inner(dg2, dv) - inner(m.J * (w - wb) * w * xi, dg1) -
         m.lambda * inner(inner(i, xi) * xi - inner(ib, xib) * xib, dg1);
}

/// Bounded form of the same balance (upper bound on raw_balance_rhs).
inline double medium_balance_rhs(const EmbeddedState& s,
                                 const EmbeddedState& sb, Complex dv,
                                 double eta, const MachineParams& m) {
  const double w = s.omega();
  const double wb = sb.omega();
  const Complex xi = s.s2, xib = sb.s2, i = s.s3, ib = sb.s3;
  const Complex dg1 = kJ * w * xi - kJ * wb * xib;
  const Complex dg2 = i - ib;
  const double dissip = m.K * std::norm(dg1) + m.R * std::norm(dg2);
  const double coef = eta - m.J * wb * wb + m.lambda * inner(ib, xib);
  const double d_inner = -(w - wb) * inner(xi, kJ * xib);
  const Complex rel = xi * std::conj(xib);
  const double dxi = std::abs(rel - 1.0);
  return -dissip + inner(dg2, dv) + coef * d_inner +
         eta * std::abs(w - wb) * std::abs(xi - xib) +
         m.K * std::norm(kJ * w * rel - kJ * wb) - m.K * wb * w * dxi * dxi -
         (m.K - m.J * wb) * (w - wb) * (w - wb) +
         m.lambda * wb * std::abs((i - ib) * std::conj(xib)) * dxi +
         m.lambda * wb * std::abs(ib) * dxi * dxi;
}

struct BalanceCheck {
  double max_violation{};  ///< max over interior samples of dS/dt + vᵀQv
  double tol_diss{};
  std::size_t samples{};
  bool ok{};
};

/// Checks the dissipation inequality along an infinite-bus trajectory with
/// dS/dt taken by central differences on the recorded storage.
/// tol_diss = 1e-6 max S + (h²/6) max|S'''| (third differences of the record).
inline BalanceCheck balance_inequality_check(const Trajectory& traj,
                                             const SteadyState& ss, double eta,
                                             const MachineParams& m,
                                             const GridParams& grid,
                                             const UnitSystem& units) {
  const DecayRadius dr = decay_radius(m, ss, eta, units);
  const double margin = 1e-3 * dr.rho;
  const double floor_w = ss.omega_bar - dr.rho + margin;
  const std::size_t n = traj.size();
  std::vector<double> s(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (!(traj.states[k].omega > floor_w)) {
      throw Error(ErrorKind::kOutOfRegion,
                  "sample at t = " + std::to_string(traj.times[k]) +
                      " leaves omega > omega_bar - rho + delta");
    }
    s[k] = traj.has_storage()
               ? traj.storage[k]
               : storage_at(traj.states[k], traj.times[k], ss, eta, m, grid);
  }
  BalanceCheck out;
  if (n < 4) {
    out.ok = true;
    return out;
  }
  const double eta_s = units.eta_scale() * eta;
  double s_max = 0.0, third_max = 0.0, h_max = 0.0;
  for (std::size_t k = 0; k < n; ++k) s_max = std::max(s_max, std::abs(s[k]));
  for (std::size_t k = 1; k + 2 < n; ++k) {
    const double h = traj.times[k + 1] - traj.times[k];
    h_max = std::max(h_max, h);
    const double d3 = (s[k + 2] - 3.0 * s[k + 1] + 3.0 * s[k] - s[k - 1]) /
                      (h * h * h);
    third_max = std::max(third_max, std::abs(d3));
  }
  out.tol_diss = 1e-6 * s_max + h_max * h_max / 6.0 * third_max;
  out.max_violation = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const double t0 = traj.times[k - 1], t1 = traj.times[k],
                 t2 = traj.times[k + 1];
    // Three-point derivative on a possibly non-uniform grid.
    const double a = t1 - t0, b = t2 - t1;
    const double ds = (-b / (a * (a + b))) * s[k - 1] +
                      ((b - a) / (a * b)) * s[k] + (a / (b * (a + b))) * s[k + 1];
    const EmbeddedState e =
        embed(traj.states[k], grid.omega_s * t1 + grid.bus_phase0);
    const double viol = ds + dissipation_form(e, ss, m, eta_s);
    out.max_violation = std::max(out.max_violation, viol);
    ++out.samples;
  }
  out.ok = out.max_violation <= out.tol_diss;
  return out;
}

}  // namespace smib
