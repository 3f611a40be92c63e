#pragma once

// Time integration of the machine equations, Lyapunov monitoring along
// trajectories, and Monte Carlo sampling of the certified sublevel set.
//
// The integrated state is (θ, ω, Re I, Im I) in ℝ⁴. The rotor phasor e^{jθ}
// is always derived from θ, so it never drifts off the unit circle.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "smib/certificate.hpp"
#include "smib/error.hpp"
#include "smib/model.hpp"
#include "smib/steady_state.hpp"
#include "smib/trajectory.hpp"

namespace smib {

enum class Method { kRK4Fixed, kRK45Adaptive };

struct SimOptions {
  double step{};      ///< fixed step (RK4) or initial step (RK45)
  double duration{};
  Method method{Method::kRK4Fixed};
  double rel_tol{1e-9};
  double abs_tol{1e-11};
  bool record_storage{false};
  double eta{0.0};    ///< η used for storage samples
  double t0{0.0};
  int record_every{1};  ///< keep every n-th fixed step (RK4 only)

  void validate() const {
    internal::require_positive(step, "step");
    internal::require_positive(duration, "duration");
    internal::require_positive(rel_tol, "rel_tol");
    internal::require_positive(abs_tol, "abs_tol");
    if (record_every < 1) {
      throw Error(ErrorKind::kInvalidParameter, "record_every >= 1 violated");
    }
  }

  /// h = 1e-3 bus periods, 20 bus periods.
  static SimOptions defaults_for(const GridParams& grid) {
    SimOptions o;
    o.step = 1e-3 * grid.period();
    o.duration = 20.0 * grid.period();
    return o;
  }
};

namespace internal {

using State4 = std::array<double, 4>;

inline State4 pack(const PhysicalState& x) {
  return {x.theta, x.omega, x.current.real(), x.current.imag()};
}

inline PhysicalState unpack(const State4& y) {
  return {y[0], y[1], Complex(y[2], y[3])};
}

template <class VoltageFn>
State4 field(double t, const State4& y, const MachineParams& m,
             VoltageFn& voltage) {
  const StateDerivative d = dynamics_rhs_with_voltage(unpack(y), m, voltage(t));
  return {d.dtheta, d.domega, d.dcurrent.real(), d.dcurrent.imag()};
}

inline State4 axpy(const State4& y, double a, const State4& k) {
  return {y[0] + a * k[0], y[1] + a * k[1], y[2] + a * k[2], y[3] + a * k[3]};
}

inline bool finite(const State4& y) {
  return std::isfinite(y[0]) && std::isfinite(y[1]) && std::isfinite(y[2]) &&
         std::isfinite(y[3]);
}

template <class VoltageFn>
State4 rk4_step(double t, const State4& y, double h, const MachineParams& m,
                VoltageFn& voltage) {
  const State4 k1 = field(t, y, m, voltage);
  const State4 k2 = field(t + h / 2, axpy(y, h / 2, k1), m, voltage);
  const State4 k3 = field(t + h / 2, axpy(y, h / 2, k2), m, voltage);
  const State4 k4 = field(t + h, axpy(y, h, k3), m, voltage);
  State4 out;
  for (int i = 0; i < 4; ++i) {
    out[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  return out;
}

/// Dormand-Prince 5(4) step. Returns the 5th-order solution and writes the
/// embedded error estimate.
template <class VoltageFn>
State4 dopri_step(double t, const State4& y, double h, const MachineParams& m,
                  VoltageFn& voltage, State4& err) {
  static constexpr double a21 = 1.0 / 5.0;
  static constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
  static constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0,
                          a43 = 32.0 / 9.0;
  static constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0,
                          a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
  static constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0,
                          a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                          a65 = -5103.0 / 18656.0;
  static constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0,
                          b4 = 125.0 / 192.0, b5 = -2187.0 / 6784.0,
                          b6 = 11.0 / 84.0;
  static constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0,
                          e4 = 71.0 / 1920.0, e5 = -17253.0 / 339200.0,
                          e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;

  const State4 k1 = field(t, y, m, voltage);
  State4 tmp;
  for (int i = 0; i < 4; ++i) tmp[i] = y[i] + h * a21 * k1[i];
  const State4 k2 = field(t + h / 5.0, tmp, m, voltage);
  for (int i = 0; i < 4; ++i) tmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
  const State4 k3 = field(t + 3.0 * h / 10.0, tmp, m, voltage);
  for (int i = 0; i < 4; ++i) {
    tmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
  }
  const State4 k4 = field(t + 4.0 * h / 5.0, tmp, m, voltage);
  for (int i = 0; i < 4; ++i) {
    tmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
  }
  const State4 k5 = field(t + 8.0 * h / 9.0, tmp, m, voltage);
  for (int i = 0; i < 4; ++i) {
    tmp[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] +
                         a64 * k4[i] + a65 * k5[i]);
  }
  const State4 k6 = field(t + h, tmp, m, voltage);
  State4 out;
  for (int i = 0; i < 4; ++i) {
    out[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] +
                         b6 * k6[i]);
  }
  const State4 k7 = field(t + h, out, m, voltage);
  for (int i = 0; i < 4; ++i) {
    err[i] = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] +
                  e6 * k6[i] + e7 * k7[i]);
  }
  return out;
}

/// Drives the chosen integrator and calls `on_sample(t, state)` for the
/// initial point and every recorded point. Returns the final state.
template <class VoltageFn, class OnSample>
PhysicalState drive(const PhysicalState& initial, const MachineParams& m,
                    const SimOptions& opts, VoltageFn& voltage,
                    OnSample&& on_sample) {
  opts.validate();
  if (!initial.finite()) {
    throw Error(ErrorKind::kNonFinite, "initial state is not finite");
  }
  State4 y = pack(initial);
  const double t_end = opts.t0 + opts.duration;
  on_sample(opts.t0, initial);

  if (opts.method == Method::kRK4Fixed) {
    const auto n = static_cast<long long>(
        std::ceil(opts.duration / opts.step * (1.0 - 1e-12)));
    const double h = opts.duration / static_cast<double>(n);
    for (long long k = 0; k < n; ++k) {
      const double t = opts.t0 + static_cast<double>(k) * h;
      y = rk4_step(t, y, h, m, voltage);
      if (!finite(y)) {
        throw Error(ErrorKind::kNonFinite,
                    "state blew up at t = " + std::to_string(t + h));
      }
      if ((k + 1) % opts.record_every == 0 || k + 1 == n) {
        on_sample(opts.t0 + static_cast<double>(k + 1) * h, unpack(y));
      }
    }
    return unpack(y);
  }

  double t = opts.t0;
  double h = std::min(opts.step, opts.duration);
  const double h_min = 1e-12 * opts.duration;
  State4 err;
  while (t < t_end) {
    bool last = false;
    if (t + h >= t_end) {
      h = t_end - t;
      last = true;
    }
    const State4 cand = dopri_step(t, y, h, m, voltage, err);
    double e = 0.0;
    for (int i = 0; i < 4; ++i) {
      const double sc =
          opts.abs_tol + opts.rel_tol * std::max(std::abs(y[i]), std::abs(cand[i]));
      e = std::max(e, std::abs(err[i]) / sc);
    }
    if (!std::isfinite(e)) e = 1e10;
    if (e <= 1.0) {
      t = last ? t_end : t + h;
      y = cand;
      if (!finite(y)) {
        throw Error(ErrorKind::kNonFinite,
                    "state blew up at t = " + std::to_string(t));
      }
      on_sample(t, unpack(y));
    }
    const double factor =
        e == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(e, -0.2), 0.2, 5.0);
    h *= factor;
    if (t < t_end && h < h_min) {
      throw Error(ErrorKind::kStepUnderflow,
                  "adaptive step fell below 1e-12 * duration at t = " +
                      std::to_string(t));
    }
  }
  return unpack(y);
}

}  // namespace internal

/// Stiff grid voltage source.
struct InfiniteBus {
  GridParams grid;
  Complex operator()(double t) const { return bus_voltage(t, grid); }
};

/// Integrates with an arbitrary terminal voltage V(t). When a reference
/// steady state is supplied and opts.record_storage is set, S(t) is recorded
/// relative to that orbit (the orbit phase follows `grid`).
template <class VoltageFn>
Trajectory integrate_with_voltage(const PhysicalState& initial,
                                  const MachineParams& m,
                                  const GridParams& grid,
                                  const SimOptions& opts, VoltageFn voltage,
                                  const std::optional<SteadyState>& reference =
                                      std::nullopt) {
  if (opts.record_storage && !reference) {
    throw Error(ErrorKind::kInvalidParameter,
                "storage recording needs a reference steady state");
  }
  Trajectory traj;
  internal::drive(initial, m, opts, voltage,
                  [&](double t, const PhysicalState& x) {
                    traj.times.push_back(t);
                    traj.states.push_back(x);
                    if (opts.record_storage) {
                      traj.storage.push_back(
                          storage_at(x, t, *reference, opts.eta, m, grid));
                    }
                  });
  return traj;
}

inline Trajectory integrate(const PhysicalState& initial,
                            const MachineParams& m, const GridParams& grid,
                            const SimOptions& opts,
                            const std::optional<SteadyState>& reference =
                                std::nullopt) {
  return integrate_with_voltage(initial, m, grid, opts, InfiniteBus{grid},
                                reference);
}

/// Final state only; nothing is recorded.
inline PhysicalState propagate(const PhysicalState& initial,
                               const MachineParams& m, const GridParams& grid,
                               const SimOptions& opts) {
  InfiniteBus bus{grid};
  return internal::drive(initial, m, opts, bus,
                         [](double, const PhysicalState&) {});
}

/// Phase-invariant distance to the periodic steady orbit:
/// sqrt(|ξ ξ̄(t)* - 1|² + (ω - ω̄)² + |I e^{-jφ(t)} - Ī|²).
inline double orbit_distance(const PhysicalState& x, double t,
                             const SteadyState& ss, const GridParams& grid) {
  const double ref = grid.omega_s * t + grid.bus_phase0;
  const Complex rel = std::polar(1.0, wrap_angle(x.theta - ref - ss.delta));
  const Complex di = x.current * std::polar(1.0, -ref) - ss.i_bar;
  const double dw = x.omega - ss.omega_bar;
  return std::sqrt(std::norm(rel - 1.0) + dw * dw + std::norm(di));
}

struct MonitorReport {
  bool monotone{true};
  double max_increase{};  ///< largest S(t_{k+1}) - S(t_k) inside the region
  double tol_mono{};
  bool region_defined{};  ///< false when the certificate has no decay radius
  std::optional<double> exit_time;
  std::size_t samples_in_region{};
  std::optional<BalanceCheck> balance;
};

/// Storage decrease along a recorded trajectory. Monotonicity is checked on
/// samples with ω > ω̄ - ρ + δ (δ = 1e-3 ρ) with
/// tol_mono = 1e-8 S(0) + 64 ε (max S + E), E the size of the storage's
/// constituent terms. Without a decay radius every sample
/// counts and no balance check is made.
inline MonitorReport lyapunov_monitor(const Trajectory& traj,
                                      const SteadyState& ss,
                                      const Certificate& cert,
                                      const MachineParams& m,
                                      const GridParams& grid,
                                      const UnitSystem& units) {
  MonitorReport out;
  const std::size_t n = traj.size();
  if (n == 0) return out;
  std::vector<double> s = traj.storage;
  if (s.size() != n) {
    s.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      s[k] = storage_at(traj.states[k], traj.times[k], ss, cert.eta, m, grid);
    }
  }
  const double s_max = *std::max_element(s.begin(), s.end());
  // Rounding floor: S is a difference of terms of size J ω̄², L‖Ī‖², |coef|.
  const double w = ss.omega_bar;
  const double energy = m.J * w * w + m.L * std::norm(ss.i_bar) +
                        std::abs(cert.eta - m.J * w * w + m.lambda * ss.re_ixi);
  out.tol_mono = 1e-8 * std::abs(s[0]) +
                 64.0 * std::numeric_limits<double>::epsilon() *
                     (std::abs(s_max) + energy);

  out.region_defined = cert.assumption_holds() && std::isfinite(cert.rho);
  const double floor_w = out.region_defined
                             ? ss.omega_bar - cert.rho + 1e-3 * cert.rho
                             : -std::numeric_limits<double>::infinity();
  std::size_t inside_prefix = n;
  for (std::size_t k = 0; k < n; ++k) {
    const bool inside = traj.states[k].omega > floor_w;
    if (!inside) {
      if (!out.exit_time) {
        out.exit_time = traj.times[k];
        inside_prefix = k;
      }
      continue;
    }
    ++out.samples_in_region;
    if (k + 1 < n && traj.states[k + 1].omega > floor_w) {
      const double inc = s[k + 1] - s[k];
      out.max_increase = std::max(out.max_increase, inc);
      if (inc > out.tol_mono) out.monotone = false;
    }
  }

  if (out.region_defined && inside_prefix >= 4) {
    Trajectory prefix;
    prefix.times.assign(traj.times.begin(), traj.times.begin() + inside_prefix);
    prefix.states.assign(traj.states.begin(),
                         traj.states.begin() + inside_prefix);
    prefix.storage.assign(s.begin(), s.begin() + inside_prefix);
    out.balance =
        balance_inequality_check(prefix, ss, cert.eta, m, grid, units);
  }
  return out;
}

inline constexpr int kSegmentSamples = 64;

/// Conservative membership in the connected component of the sublevel set
/// {S < J ρ̂²/2} containing the steady state: the state must be below the
/// level and so must the straight segment to the steady state in local
/// coordinates (φ, δω, Re z, Im z), sampled at 64 points.
inline bool sublevel_membership(const PhysicalState& x, double t,
                                const SteadyState& ss, const Certificate& cert,
                                const MachineParams& m,
                                const GridParams& grid) {
  if (cert.verdict != Verdict::kCertifiedROA) {
    throw Error(ErrorKind::kCertificateRequired,
                "sublevel membership needs a CertifiedROA certificate");
  }
  const EmbeddedState sb = ss.embedded();
  const LocalCoords c = to_local(x, t, ss, grid);
  if (!(storage(embed(x, grid.omega_s * t + grid.bus_phase0), sb, cert.eta,
                m) < cert.roa_level)) {
    return false;
  }
  for (int k = 1; k <= kSegmentSamples; ++k) {
    const double a = static_cast<double>(k) / kSegmentSamples;
    const LocalCoords p{a * c.phi, a * c.domega, a * c.z};
    if (!(storage(from_local(p, ss), sb, cert.eta, m) < cert.roa_level)) {
      return false;
    }
  }
  return true;
}

/// Sampling box around the steady state in (φ, δω, Re z, Im z).
struct SamplingBox {
  std::array<std::pair<double, double>, 4> ranges{};
};

struct BasinSpec {
  int n{500};
  std::uint64_t seed{1};
  SamplingBox box;
  double horizon{};        ///< simulated time per sample
  SimOptions sim;          ///< step and method; duration is replaced by horizon
  double convergence_tol{1e-4};
  unsigned threads{0};     ///< 0: SMIB_THREADS or hardware concurrency
};

struct BasinSample {
  LocalCoords initial;
  bool in_sublevel{};
  bool converged{};
  double final_distance{};
};

struct BasinReport {
  int n_samples{};
  int n_in_sublevel{};
  int n_converged_of_in_sublevel{};
  int n_converged_total{};
  std::vector<LocalCoords> failures;
  std::vector<BasinSample> samples;

  bool sound() const { return failures.empty(); }
};

/// Worker count: SMIB_THREADS caps it when set.
inline unsigned default_thread_count() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SMIB_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) n = std::min(n, static_cast<unsigned>(v));
  }
  return n;
}

namespace internal {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}
}  // namespace internal

/// Initial condition at t = 0 from local coordinates around the orbit.
inline PhysicalState state_from_local(const LocalCoords& c,
                                      const SteadyState& ss,
                                      const GridParams& grid) {
  return {grid.bus_phase0 + ss.delta + c.phi, ss.omega_bar + c.domega,
          (ss.i_bar + c.z) * std::polar(1.0, grid.bus_phase0)};
}

/// Draws initial conditions, classifies them against the certified sublevel
/// component and simulates each. Sample i uses its own generator seeded from
/// (seed, i), so results do not depend on scheduling.
inline BasinReport basin_sample(const SteadyState& ss, const Certificate& cert,
                                const MachineParams& m, const GridParams& grid,
                                const BasinSpec& spec) {
  if (cert.verdict != Verdict::kCertifiedROA) {
    throw Error(ErrorKind::kCertificateRequired,
                "basin sampling needs a CertifiedROA certificate");
  }
  internal::require_positive(spec.horizon, "horizon");
  SimOptions sim = spec.sim;
  sim.duration = spec.horizon;
  sim.t0 = 0.0;
  sim.record_storage = false;
  sim.validate();

  std::vector<BasinSample> samples(static_cast<std::size_t>(std::max(spec.n, 0)));
  auto run_one = [&](std::size_t i) {
    std::mt19937_64 rng(internal::splitmix64(
        spec.seed ^ internal::splitmix64(static_cast<std::uint64_t>(i))));
    std::array<double, 4> u{};
    for (int k = 0; k < 4; ++k) {
      const auto [lo, hi] = spec.box.ranges[k];
      u[k] = lo + (hi - lo) * internal::unit_uniform(rng);
    }
    BasinSample out;
    out.initial = {u[0], u[1], Complex(u[2], u[3])};
    const PhysicalState x0 = state_from_local(out.initial, ss, grid);
    out.in_sublevel = sublevel_membership(x0, 0.0, ss, cert, m, grid);
    try {
      const PhysicalState xf = propagate(x0, m, grid, sim);
      out.final_distance = orbit_distance(xf, sim.duration, ss, grid);
    } catch (const Error&) {
      out.final_distance = std::numeric_limits<double>::infinity();
    }
    out.converged = out.final_distance < spec.convergence_tol;
    samples[i] = out;
  };

  const unsigned threads = std::max(
      1u, std::min<unsigned>(spec.threads ? spec.threads : default_thread_count(),
                             static_cast<unsigned>(samples.size())));
  if (threads <= 1) {
    for (std::size_t i = 0; i < samples.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < samples.size(); i = next++) run_one(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  BasinReport rep;
  rep.n_samples = static_cast<int>(samples.size());
  for (const auto& s : samples) {
    if (s.converged) ++rep.n_converged_total;
    if (s.in_sublevel) {
      ++rep.n_in_sublevel;
      if (s.converged) {
        ++rep.n_converged_of_in_sublevel;
      } else {
        rep.failures.push_back(s.initial);
      }
    }
  }
  rep.samples = std::move(samples);
  return rep;
}

}  // namespace smib
