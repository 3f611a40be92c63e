#include "smib/certificate.hpp"

#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "smib/simulator.hpp"
#include "smib/steady_state.hpp"
#include "test_params.hpp"

namespace smib {
namespace {

using test::per_unit;
using test::reference_grid;
using test::reference_machine;

SteadyState ss1() { return solve_steady_states(reference_machine(), reference_grid())[0]; }
SteadyState ss2() { return solve_steady_states(reference_machine(), reference_grid())[1]; }

EmbeddedState random_embedded(std::mt19937_64& rng, double w_lo, double w_hi) {
  const PhysicalState x{test::uniform(rng, -4.0, 4.0), test::uniform(rng, w_lo, w_hi),
                        test::random_complex(rng, 1.5)};
  return embed(x, test::uniform(rng, -4.0, 4.0));
}

// ---------------------------------------------------------------------------
// Storage.

GTEST_TEST(StorageTest, ZeroAtSteadyState) {
  const SteadyState s = ss1();
  EXPECT_EQ(storage(s.embedded(), s.embedded(), 0.3, reference_machine()), 0.0);
}

GTEST_TEST(StorageTest, PeriodicInAngle) {
  const SteadyState s = ss1();
  const MachineParams m = reference_machine();
  const GridParams g = reference_grid();
  const PhysicalState x{s.delta + 0.4, 1.02, s.i_bar + Complex(0.01, -0.02)};
  PhysicalState shifted = x;
  shifted.theta += 2.0 * std::numbers::pi;
  EXPECT_NEAR(storage_at(x, 0.0, s, 0.0, m, g), storage_at(shifted, 0.0, s, 0.0, m, g),
              1e-15);
}

GTEST_TEST(StorageTest, ThreeFormsAgree) {
  const MachineParams m = reference_machine();
  std::mt19937_64 rng(41);
  for (int k = 0; k < 10000; ++k) {
    const EmbeddedState sb = random_embedded(rng, 0.5, 1.5);
    const EmbeddedState s = random_embedded(rng, 0.0, 2.0);
    const double eta = test::uniform(rng, 0.0, 2.0);
    const double w = s.omega(), wb = sb.omega();
    const Complex xi = s.s2, xib = sb.s2, i = s.s3, ib = sb.s3;
    const double coef = eta - m.J * wb * wb + m.lambda * inner(ib, xib);

    // Bregman divergence of H(x) = |x1|²/(2J) + |x2|²/(2L), x = (J jωξ, L I),
    // minus the angle correction.
    const Complex x1 = m.J * kJ * w * xi, x2 = m.L * i;
    const Complex xb1 = m.J * kJ * wb * xib, xb2 = m.L * ib;
    const double h = std::norm(x1) / (2 * m.J) + std::norm(x2) / (2 * m.L);
    const double hb = std::norm(xb1) / (2 * m.J) + std::norm(xb2) / (2 * m.L);
    const double grad = inner(xb1 / m.J, x1 - xb1) + inner(xb2 / m.L, x2 - xb2);
    const double form1 = h - hb - grad - coef * (inner(xi, xib) - 1.0);

    const double form3 = 0.5 * m.J * wb * (w - wb) * std::norm(xi - xib) +
                         0.5 * m.J * (w - wb) * (w - wb) +
                         0.5 * m.L * std::norm(i - ib) +
                         0.5 * (eta + m.lambda * inner(ib, xib)) * std::norm(xi - xib);

    const double lib = storage(s, sb, eta, m);
    const double scale = 1.0 + m.J * (w * w + wb * wb) + m.L * (std::norm(i) + std::norm(ib)) +
                         std::abs(coef);
    EXPECT_NEAR(lib, form1, 1e-12 * scale);
    EXPECT_NEAR(lib, form3, 1e-12 * scale);
  }
}

GTEST_TEST(StorageTest, RejectsOffManifoldStates) {
  const SteadyState s = ss1();
  EmbeddedState bad = s.embedded();
  bad.s2 *= 1.01;
  try {
    storage(bad, s.embedded(), 0.0, reference_machine());
    FAIL() << "expected ManifoldViolation";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kManifoldViolation);
  }
}

// ---------------------------------------------------------------------------
// Algebraic identities used by the energy balance.

GTEST_TEST(IdentityTest, FrequencyIdentity) {
  std::mt19937_64 rng(42);
  for (int k = 0; k < 10000; ++k) {
    const EmbeddedState s = random_embedded(rng, -3.0, 3.0);
    const EmbeddedState sb = random_embedded(rng, -3.0, 3.0);
    const double w = s.omega(), wb = sb.omega();
    const double lhs = (w - wb) * (w - wb);
    const double rhs = std::norm(s.s1 - sb.s1) - w * wb * std::norm(s.s2 - sb.s2);
    EXPECT_NEAR(lhs, rhs, 1e-12 * (1.0 + (std::abs(w) + std::abs(wb)) * (std::abs(w) + std::abs(wb))));
  }
}

GTEST_TEST(IdentityTest, AngleDistance) {
  std::mt19937_64 rng(43);
  for (int k = 0; k < 10000; ++k) {
    const double th = test::uniform(rng, -20.0, 20.0);
    const double thb = test::uniform(rng, -20.0, 20.0);
    const Complex xi = embed({th, 1.0, Complex()}, 0.0).s2;
    const Complex xib = embed({thb, 1.0, Complex()}, 0.0).s2;
    EXPECT_NEAR(std::norm(xi - xib), 2.0 - 2.0 * std::cos(th - thb), 1e-12);
  }
}

GTEST_TEST(IdentityTest, MediumBalanceBoundsRawBalance) {
  const MachineParams m = reference_machine();
  std::mt19937_64 rng(44);
  const auto states = solve_steady_states(m, reference_grid());
  for (int k = 0; k < 1000; ++k) {
    const SteadyState& s = states[k % 2];
    const EmbeddedState sb = s.embedded();
    const EmbeddedState x =
        embed({s.delta + test::uniform(rng, -3.0, 3.0), test::uniform(rng, 0.0, 2.0),
               s.i_bar + test::random_complex(rng, 1.0)},
              0.0);
    const Complex dv = test::random_complex(rng, 0.5);
    const double eta = test::uniform(rng, 0.0, 1.0);
    const double raw = raw_balance_rhs(x, sb, dv, m);
    const double med = medium_balance_rhs(x, sb, dv, eta, m);
    EXPECT_GE(med - raw, -1e-12 * (1.0 + std::abs(raw))) << "draw " << k;
  }
}

// ---------------------------------------------------------------------------
// Port-Hamiltonian form.

GTEST_TEST(PortHamiltonianTest, RandomStates) {
  const MachineParams m = reference_machine();
  const GridParams g = reference_grid();
  std::mt19937_64 rng(45);
  for (int k = 0; k < 1000; ++k) {
    const PhysicalState x{test::uniform(rng, -10, 10), test::uniform(rng, -2, 3),
                          test::random_complex(rng, 2.0)};
    const double t = test::uniform(rng, 0.0, 100.0);
    const double scale = 1.0 + m.J * x.omega * x.omega + m.K * std::abs(x.omega) +
                         m.lambda * (std::abs(x.omega) + std::abs(x.current)) +
                         std::abs(x.current) + g.v_mag;
    EXPECT_LT(ph_consistency(x, m, g, t), 1e-10 * scale);
  }
}

GTEST_TEST(PortHamiltonianTest, SpecialStates) {
  const MachineParams m = reference_machine();
  const GridParams g = reference_grid();
  EXPECT_EQ(ph_consistency({0.3, 0.0, Complex()}, m, g, 0.0), 0.0);
  const SteadyState s = ss1();
  EXPECT_LT(ph_consistency(s.at(1.7, g), m, g, 1.7), 1e-10);
}

// ---------------------------------------------------------------------------
// Q matrix and PD tests.

GTEST_TEST(QMatrixTest, Examples) {
  MachineParams m = reference_machine();
  const SteadyState s = ss1();
  const QMatrix q = q_matrix(s.omega_bar, s, m, 0.0);
  EXPECT_DOUBLE_EQ(q[0][0], 19.0 - 3.53);
  EXPECT_TRUE(is_positive_definite(q));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_EQ(q[i][j], q[j][i]);

  m.lambda = 0.0;
  const QMatrix d = q_matrix(s.omega_bar, s, m, 0.0);
  EXPECT_EQ(d[0][1], 0.0);
  EXPECT_EQ(d[1][2], 0.0);
  EXPECT_DOUBLE_EQ(d[1][1], m.K * s.omega_bar * s.omega_bar);
  EXPECT_EQ(d[2][2], m.R);
}

GTEST_TEST(PositiveDefiniteTest, Examples) {
  EXPECT_TRUE(is_positive_definite(identity_matrix<3>()));
  QMatrix d = identity_matrix<3>();
  d[1][1] = -1.0;
  EXPECT_FALSE(is_positive_definite(d));
  d[1][1] = 0.0;
  EXPECT_FALSE(is_positive_definite(d));
}

GTEST_TEST(PositiveDefiniteTest, MatchesEigenvalueSigns) {
  std::mt19937_64 rng(46);
  int pd = 0;
  for (int k = 0; k < 2000; ++k) {
    QMatrix q{};
    for (int i = 0; i < 3; ++i) {
      for (int j = i; j < 3; ++j) {
        q[i][j] = q[j][i] = test::uniform(rng, -1.0, 1.0) + (i == j ? 1.0 : 0.0);
      }
    }
    Matrix4 a{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) a[i][j] = q[i][j];
    a[3][3] = 7.0;  // known positive eigenvalue
    const auto ev = eig4(a);
    double min_ev = 1e300;
    for (const Complex& l : ev) min_ev = std::min(min_ev, l.real());
    if (std::abs(min_ev) < 1e-9) continue;
    EXPECT_EQ(is_positive_definite(q), min_ev > 0.0) << "draw " << k;
    pd += min_ev > 0.0;
  }
  EXPECT_GT(pd, 100);
}

// ---------------------------------------------------------------------------
// Assumption checks and eta intervals.

GTEST_TEST(AssumptionTest, ReferenceMachine) {
  const MachineParams m = reference_machine();
  const AssumptionCheck a = check_assumption(m, ss1(), 0.0, per_unit());
  EXPECT_TRUE(a.cond_inertia);
  EXPECT_TRUE(a.cond_khat);
  EXPECT_TRUE(a.cond_c);
  EXPECT_NEAR(a.c, 1.0 - 19.0 / 19.2, 1e-15);
  EXPECT_LT(a.c, 0.5);
}

GTEST_TEST(AssumptionTest, DegenerateDenominator) {
  MachineParams m = reference_machine();
  m.J = 19.0;  // K w^2 - J w^3 = 0
  const AssumptionCheck a = check_assumption(m, ss1(), 0.01, per_unit());
  EXPECT_TRUE(a.degenerate);
  EXPECT_FALSE(a.cond_inertia);
  EXPECT_EQ(a.k_hat, -std::numeric_limits<double>::infinity());
  EXPECT_THROW(decay_radius(m, ss1(), 0.01, per_unit()), Error);
}

GTEST_TEST(AssumptionTest, SiModeDoesNotScaleEta) {
  const MachineParams m = reference_machine();
  UnitSystem si;
  si.mode = UnitMode::kSI;
  const double eta = 0.5;
  const SteadyState s = ss1();
  const double w = s.omega_bar;
  const double expected = m.K - m.lambda * std::abs(s.i_bar) / w -
                          m.lambda * m.lambda / (4 * m.R) -
                          eta * eta / (4 * (m.K * w * w - m.J * w * w * w));
  EXPECT_NEAR(check_assumption(m, s, eta, si).k_hat, expected, 1e-12);
  const double base = 2.0 * std::numbers::pi * 60.0;
  const double expected_pu = m.K - m.lambda * std::abs(s.i_bar) / w -
                             m.lambda * m.lambda / (4 * m.R) -
                             base * base * 1e-4 / (4 * (m.K * w * w - m.J * w * w * w));
  EXPECT_NEAR(check_assumption(m, s, 0.01, per_unit()).k_hat, expected_pu, 1e-12);
}

GTEST_TEST(EtaBoundsTest, ReferenceMachine) {
  const MachineParams m = reference_machine();
  const EtaInterval l1 = eta_bounds(m, ss1(), per_unit(), EtaMode::kLocal);
  EXPECT_EQ(l1.lower, 0.0);
  EXPECT_FALSE(l1.empty);
  EXPECT_TRUE(l1.contains(0.0));

  const EtaInterval l2 = eta_bounds(m, ss2(), per_unit(), EtaMode::kLocal);
  EXPECT_NEAR(l2.lower, 0.5152, 1e-3);
  EXPECT_NEAR(l2.upper, 0.0737, 1e-3);
  EXPECT_TRUE(l2.empty);

  // The closed-form upper bound is where K_hat crosses zero.
  EXPECT_NEAR(check_assumption(m, ss2(), l2.upper, per_unit()).k_hat, 0.0, 1e-9);
}

GTEST_TEST(DecayRadiusTest, Formulas) {
  const MachineParams m = reference_machine();
  const SteadyState s = ss1();
  const DecayRadius dr = decay_radius(m, s, 0.0, per_unit());
  const double k_hat = check_assumption(m, s, 0.0, per_unit()).k_hat;
  EXPECT_NEAR(dr.rho, k_hat / (m.K - m.Tm / 2.0), 1e-14);
  EXPECT_EQ(dr.rho_hat, std::min(dr.rho, s.omega_bar));
  EXPECT_DOUBLE_EQ(dr.roa_level, m.J * dr.rho_hat * dr.rho_hat / 2.0);

  // Sampled cross-check of the half-line.
  for (int k = 1; k <= 200; ++k) {
    const double w = s.omega_bar - dr.rho + 1e-9 + 11.0 * dr.rho * k / 200.0;
    EXPECT_TRUE(is_positive_definite(q_matrix(w, s, m, 0.0)));
  }
}

GTEST_TEST(DecayRadiusTest, ClampAndLimit) {
  MachineParams m = reference_machine();
  m.lambda = 1e-3;
  const SteadyState s = make_steady_state(0.0, m, reference_grid());
  const DecayRadius big = decay_radius(m, s, 0.0, per_unit());
  EXPECT_GT(big.rho, s.omega_bar);
  EXPECT_EQ(big.rho_hat, s.omega_bar);

  const MachineParams t = reference_machine();
  const EtaInterval l = eta_bounds(t, ss1(), per_unit(), EtaMode::kLocal);
  const DecayRadius tiny = decay_radius(t, ss1(), l.upper * (1.0 - 1e-9), per_unit());
  EXPECT_GT(tiny.rho, 0.0);
  EXPECT_LT(tiny.rho, 1e-7);
}

GTEST_TEST(HalfLineTest, Examples) {
  const MachineParams m = reference_machine();
  const SteadyState s = ss1();
  EXPECT_TRUE(q_pd_on_halfline(m, s, 0.0, per_unit(), 100));

  MachineParams bad = m;
  bad.J = 25.0;
  EXPECT_FALSE(q_pd_on_halfline(bad, s, 0.0, per_unit(), 100));
  for (double w : {0.2, 1.0, 3.0}) {
    EXPECT_FALSE(is_positive_definite(q_matrix(w, s, bad, 0.0)));
  }
}

// Q(omega_bar) is PD exactly when K > J omega_bar and K_hat > 0.
GTEST_TEST(LemmaTest, SchurEquivalence) {
  const MachineParams base = reference_machine();
  const UnitSystem units = per_unit();
  std::mt19937_64 rng(47);
  int agree = 0, positive = 0;
  for (int k = 0; k < 1000; ++k) {
    MachineParams m;
    m.J = test::log_uniform(rng, base.J, 1.0);
    m.K = test::log_uniform(rng, base.K, 1.0);
    m.Tm = test::log_uniform(rng, base.Tm, 1.0);
    m.L = test::log_uniform(rng, base.L, 1.0);
    m.R = test::log_uniform(rng, base.R, 1.0);
    m.lambda = test::log_uniform(rng, base.lambda, 1.0);
    const SteadyState s =
        make_steady_state(test::uniform(rng, -3.0, 3.0), m, reference_grid());
    const double eta = test::uniform(rng, 0.0, 0.1);
    const AssumptionCheck a = check_assumption(m, s, eta, units);
    const double inertia = m.K - m.J * s.omega_bar;
    if (std::abs(inertia) < 1e-9 || std::abs(a.k_hat) < 1e-9) continue;
    const bool pd = is_positive_definite(q_matrix(s.omega_bar, s, m, units.eta_scale() * eta));
    EXPECT_EQ(pd, a.cond_inertia && a.cond_khat) << "draw " << k;
    ++agree;
    positive += pd;
  }
  EXPECT_GT(agree, 990);
  EXPECT_GT(positive, 50);
}

GTEST_TEST(LemmaTest, HalfLinePositiveDefinite) {
  const MachineParams base = reference_machine();
  const UnitSystem units = per_unit();
  std::mt19937_64 rng(48);
  int holds = 0;
  for (int k = 0; k < 1000; ++k) {
    MachineParams m;
    m.J = test::log_uniform(rng, base.J, 1.0);
    m.K = test::log_uniform(rng, base.K, 1.0);
    m.Tm = test::log_uniform(rng, base.Tm, 1.0);
    m.L = test::log_uniform(rng, base.L, 1.0);
    m.R = test::log_uniform(rng, base.R, 1.0);
    m.lambda = test::log_uniform(rng, base.lambda, 1.0);
    const SteadyState s =
        make_steady_state(test::uniform(rng, -3.0, 3.0), m, reference_grid());
    const double eta = test::uniform(rng, 0.0, 0.1);
    if (!check_assumption(m, s, eta, units).holds()) continue;
    ++holds;
    EXPECT_TRUE(q_pd_on_halfline(m, s, eta, units, 200)) << "draw " << k;
  }
  EXPECT_GT(holds, 50);
}

// ---------------------------------------------------------------------------
// Hessian and verdicts.

GTEST_TEST(HessianTest, Examples) {
  const MachineParams m = reference_machine();
  const HessianCheck h1 = hessian_positive(ss1(), 0.0, m);
  EXPECT_TRUE(h1.positive);
  EXPECT_TRUE(h1.consistent);
  EXPECT_NEAR(h1.r, m.lambda * 0.0482, 1e-3);

  const HessianCheck h2 = hessian_positive(ss2(), 0.0, m);
  EXPECT_FALSE(h2.positive);
  EXPECT_NEAR(h2.r, -0.5152, 1e-3);

  const double eta0 = -m.lambda * ss2().re_ixi;
  const HessianCheck hb = hessian_positive(ss2(), eta0, m);
  EXPECT_NEAR(hb.r, 0.0, 1e-15);
  EXPECT_NEAR(hb.min_eig_estimate, 0.0, 5e-4);
}

GTEST_TEST(CertifyTest, ReferenceVerdicts) {
  const MachineParams m = reference_machine();
  const Certificate c1 = certify(m, reference_grid(), ss1(), per_unit());
  EXPECT_EQ(c1.eta, 0.0);
  EXPECT_TRUE(c1.verdict == Verdict::kCertifiedLocal || c1.verdict == Verdict::kCertifiedROA);
  EXPECT_TRUE(c1.cond_local);
  EXPECT_EQ(c1.rho_hat, std::min(c1.rho, 1.0));

  const Certificate c2 = certify(m, reference_grid(), ss2(), per_unit());
  EXPECT_EQ(c2.verdict, Verdict::kInconclusive);
  EXPECT_FALSE(c2.cond_local);
}

GTEST_TEST(CertifyTest, LowInertiaIsRoaCertified) {
  const MachineParams m = test::low_inertia_machine();
  const SteadyState s = solve_steady_states(m, reference_grid())[0];
  const Certificate c = certify(m, reference_grid(), s, per_unit());
  EXPECT_EQ(c.verdict, Verdict::kCertifiedROA);
  EXPECT_TRUE(c.cond_local);
  EXPECT_TRUE(c.assumption_holds());
  EXPECT_DOUBLE_EQ(c.roa_level, m.J * c.rho_hat * c.rho_hat / 2.0);
}

GTEST_TEST(CertifyTest, WeakCouplingLocalBoundIsZero) {
  MachineParams m = reference_machine();
  m.lambda = 1e-9;
  const SteadyState s = make_steady_state(0.3, m, reference_grid());
  const EtaInterval l = eta_bounds(m, s, per_unit(), EtaMode::kLocal);
  EXPECT_NEAR(l.lower, 0.0, m.lambda * std::abs(s.i_bar));
  const Certificate c = certify(m, reference_grid(), s, per_unit(), 0.0);
  EXPECT_EQ(c.verdict == Verdict::kInconclusive, !c.assumption_holds() || !c.cond_local);
}

GTEST_TEST(CertifyTest, StoragePositiveInSublevelSet) {
  const MachineParams m = test::low_inertia_machine();
  const SteadyState s = solve_steady_states(m, reference_grid())[0];
  const Certificate c = certify(m, reference_grid(), s, per_unit());
  ASSERT_EQ(c.verdict, Verdict::kCertifiedROA);
  std::mt19937_64 rng(49);
  int inside = 0;
  for (int k = 0; k < 5000; ++k) {
    const LocalCoords lc{test::uniform(rng, -1.5, 1.5), test::uniform(rng, -1.0, 1.0),
                         test::random_complex(rng, 0.2)};
    const double v = storage(from_local(lc, s), s.embedded(), c.eta, m);
    if (v >= c.roa_level) continue;
    ++inside;
    EXPECT_GT(v, 0.0);
  }
  EXPECT_GT(inside, 100);
}

// ---------------------------------------------------------------------------
// Energy balance along trajectories.

GTEST_TEST(BalanceTest, SteadyTrajectoryHasNoViolation) {
  const MachineParams m = reference_machine();
  const GridParams g = reference_grid();
  const SteadyState s = ss1();
  SimOptions o = SimOptions::defaults_for(g);
  o.duration = 2.0 * g.period();
  o.record_storage = true;
  const Trajectory tr = integrate(s.at(0.0, g), m, g, o, s);
  for (double v : tr.storage) EXPECT_LT(std::abs(v), 1e-10);
  const BalanceCheck b = balance_inequality_check(tr, s, 0.0, m, g, per_unit());
  EXPECT_LT(std::abs(b.max_violation), 1e-8);
}

GTEST_TEST(BalanceTest, OutOfRegionIsReported) {
  const MachineParams m = reference_machine();
  const GridParams g = reference_grid();
  const SteadyState s = ss1();
  const DecayRadius dr = decay_radius(m, s, 0.0, per_unit());
  Trajectory tr;
  for (int k = 0; k < 5; ++k) {
    tr.times.push_back(0.01 * k);
    tr.states.push_back({s.delta, s.omega_bar - 1.01 * dr.rho, s.i_bar});
  }
  try {
    balance_inequality_check(tr, s, 0.0, m, g, per_unit());
    FAIL() << "expected OutOfRegion";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kOutOfRegion);
  }
}

// At a pure angle offset the storage rate along the flow is third order in
// the offset while the dissipation form is second order, so the two cannot
// satisfy dS/dt <= -v'Qv near the orbit.
GTEST_TEST(BalanceTest, AngleOffsetStorageRateIsCubic) {
  const MachineParams m = reference_machine();
  const GridParams g = reference_grid();
  const SteadyState s = ss1();
  std::array<double, 2> rate{}, form{};
  const std::array<double, 2> phis{1e-2, 2e-2};
  for (int k = 0; k < 2; ++k) {
    const PhysicalState x{s.delta + phis[k], s.omega_bar, s.i_bar};
    const StateDerivative d = dynamics_rhs(0.0, x, m, g);
    const double h = 1e-5;
    auto advance = [&](double a) {
      return PhysicalState{x.theta + a * d.dtheta, x.omega + a * d.domega,
                           x.current + a * d.dcurrent};
    };
    rate[k] = (storage_at(advance(h), h, s, 0.0, m, g) -
               storage_at(advance(-h), -h, s, 0.0, m, g)) / (2 * h);
    form[k] = dissipation_form(embed(x, 0.0), s, m, 0.0);
  }
  EXPECT_NEAR(form[1] / form[0], 4.0, 0.05);
  EXPECT_NEAR(rate[1] / rate[0], 8.0, 0.5);
  EXPECT_GT(rate[0] + form[0], 0.5 * form[0]);
}

// Supply-rate form of the dissipation inequality with a perturbed terminal
// voltage: dS/dt - <I - I_bar, V - V_bar> <= -v'Qv + tol.
GTEST_TEST(SupplyRateTest, SinusoidalVoltagePerturbation) {
  const MachineParams m = reference_machine();
  const GridParams g = reference_grid();
  const SteadyState s = ss1();
  SimOptions o = SimOptions::defaults_for(g);
  o.duration = 20.0 * g.period();
  o.record_storage = true;
  auto dv = [&](double t) { return 0.01 * std::sin(0.3 * t) * bus_voltage(t, g); };
  auto voltage = [&](double t) { return bus_voltage(t, g) + dv(t); };
  const Trajectory tr = integrate_with_voltage(s.at(0.0, g), m, g, o, voltage, s);

  double s_max = 0.0, third = 0.0;
  const double h = tr.times[1] - tr.times[0];
  for (double v : tr.storage) s_max = std::max(s_max, std::abs(v));
  for (std::size_t k = 1; k + 2 < tr.size(); ++k) {
    third = std::max(third, std::abs(tr.storage[k + 2] - 3 * tr.storage[k + 1] +
                                     3 * tr.storage[k] - tr.storage[k - 1]) / (h * h * h));
  }
  const double tol = 1e-6 * s_max + h * h / 6.0 * third;
  double worst = -1e300;
  for (std::size_t k = 1; k + 1 < tr.size(); ++k) {
    const double t = tr.times[k];
    const double ds = (tr.storage[k + 1] - tr.storage[k - 1]) / (2 * h);
    const Complex di = tr.states[k].current - s.at(t, g).current;
    const double supply = inner(di, dv(t));
    const double q = dissipation_form(embed(tr.states[k], t), s, m, 0.0);
    worst = std::max(worst, ds - supply + q);
  }
  EXPECT_LE(worst, tol);
}

}  // namespace
}  // namespace smib
