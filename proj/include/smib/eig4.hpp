#pragma once

// Eigenvalues of small real matrices through the characteristic polynomial.
//
// Coefficients come from the Faddeev-LeVerrier recursion. The quartic is
// solved in closed form (Ferrari, via the resolvent cubic) and each root is
// then polished by Newton iteration on the polynomial.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <string>

#include "smib/error.hpp"

namespace smib {

template <std::size_t N>
using Matrix = std::array<std::array<double, N>, N>;

using Matrix3 = Matrix<3>;
using Matrix4 = Matrix<4>;

template <std::size_t N>
Matrix<N> identity_matrix() {
  Matrix<N> m{};
  for (std::size_t i = 0; i < N; ++i) m[i][i] = 1.0;
  return m;
}

template <std::size_t N>
double frobenius_norm(const Matrix<N>& a) {
  double s = 0.0;
  for (const auto& row : a) {
    for (double v : row) s += v * v;
  }
  return std::sqrt(s);
}

template <std::size_t N>
double trace(const Matrix<N>& a) {
  double t = 0.0;
  for (std::size_t i = 0; i < N; ++i) t += a[i][i];
  return t;
}

/// Determinant of a complex matrix by partial-pivot elimination.
template <std::size_t N>
std::complex<double> determinant(std::array<std::array<std::complex<double>, N>, N> a) {
  std::complex<double> det = 1.0;
  for (std::size_t k = 0; k < N; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < N; ++i) {
      if (std::abs(a[i][k]) > std::abs(a[piv][k])) piv = i;
    }
    if (a[piv][k] == 0.0) return 0.0;
    if (piv != k) {
      std::swap(a[piv], a[k]);
      det = -det;
    }
    det *= a[k][k];
    for (std::size_t i = k + 1; i < N; ++i) {
      const auto f = a[i][k] / a[k][k];
      for (std::size_t j = k; j < N; ++j) a[i][j] -= f * a[k][j];
    }
  }
  return det;
}

template <std::size_t N>
double determinant(const Matrix<N>& a) {
  std::array<std::array<std::complex<double>, N>, N> c{};
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < N; ++j) c[i][j] = a[i][j];
  }
  return determinant<N>(c).real();
}

/// det(A - λI) evaluated directly.
template <std::size_t N>
std::complex<double> characteristic_determinant(const Matrix<N>& a,
                                                std::complex<double> lambda) {
  std::array<std::array<std::complex<double>, N>, N> c{};
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < N; ++j) c[i][j] = a[i][j];
    c[i][i] -= lambda;
  }
  return determinant<N>(c);
}

/// Monic characteristic polynomial coefficients, highest degree first:
/// det(λI - A) = λ^N + c[1] λ^{N-1} + ... + c[N].
template <std::size_t N>
std::array<double, N + 1> characteristic_polynomial(const Matrix<N>& a) {
  std::array<double, N + 1> c{};
  c[0] = 1.0;
  Matrix<N> m{};  // M_0 = 0
  for (std::size_t k = 1; k <= N; ++k) {
    // M_k = A M_{k-1} + c_{k-1} I ;  c_k = -tr(A M_k) / k
    Matrix<N> next{};
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t j = 0; j < N; ++j) {
        double s = 0.0;
        for (std::size_t l = 0; l < N; ++l) s += a[i][l] * m[l][j];
        next[i][j] = s;
      }
      next[i][i] += c[k - 1];
    }
    m = next;
    double tr = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t l = 0; l < N; ++l) tr += a[i][l] * m[l][i];
    }
    c[k] = -tr / static_cast<double>(k);
  }
  return c;
}

namespace internal {

using Cplx = std::complex<double>;

inline Cplx cbrt_principal(Cplx z) {
  if (z == Cplx(0.0)) return 0.0;
  return std::polar(std::cbrt(std::abs(z)), std::arg(z) / 3.0);
}

/// Roots of x^3 + a x^2 + b x + c (complex coefficients).
inline std::array<Cplx, 3> cubic_roots(Cplx a, Cplx b, Cplx c) {
  const Cplx p = b - a * a / 3.0;
  const Cplx q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
  const Cplx disc = std::sqrt(q * q / 4.0 + p * p * p / 27.0);
  Cplx u = cbrt_principal(-q / 2.0 + disc);
  if (std::abs(u) < 1e-300) u = cbrt_principal(-q / 2.0 - disc);
  const Cplx omega(-0.5, std::sqrt(3.0) / 2.0);
  std::array<Cplx, 3> roots{};
  Cplx uk = u;
  for (int k = 0; k < 3; ++k) {
    const Cplx t = (std::abs(uk) < 1e-300) ? Cplx(0.0) : uk - p / (3.0 * uk);
    roots[k] = t - a / 3.0;
    uk *= omega;
  }
  return roots;
}

inline std::array<Cplx, 2> quadratic_roots(Cplx b, Cplx c) {
  // x^2 + b x + c; stable form.
  const Cplx d = std::sqrt(b * b - 4.0 * c);
  const Cplx s = (std::real(std::conj(b) * d) >= 0.0) ? -(b + d) / 2.0
                                                        : -(b - d) / 2.0;
  if (s == Cplx(0.0)) return {Cplx(0.0), Cplx(0.0)};
  return {s, c / s};
}

/// Roots of x^4 + b x^3 + c x^2 + d x + e.
inline std::array<Cplx, 4> quartic_roots(double b, double c, double d,
                                         double e) {
  // Depressed form y^4 + p y^2 + q y + r with x = y - b/4.
  const double s = b / 4.0;
  const double p = c - 6.0 * s * s;
  const double q = d - 2.0 * c * s + 8.0 * s * s * s;
  const double r = e - d * s + c * s * s - 3.0 * s * s * s * s;
  std::array<Cplx, 4> y{};
  const double scale = std::max({std::abs(p), std::sqrt(std::abs(r)), 1e-300});
  if (std::abs(q) <= 1e-14 * std::pow(scale, 1.5)) {
    // Biquadratic: y^2 solves z^2 + p z + r.
    const auto z = quadratic_roots(Cplx(p), Cplx(r));
    y = {std::sqrt(z[0]), -std::sqrt(z[0]), std::sqrt(z[1]), -std::sqrt(z[1])};
  } else {
    // (y^2 + p/2 + m)^2 = 2m (y - q/(4m))^2 where m solves the resolvent
    // 8m^3 + 8p m^2 + (2p^2 - 8r) m - q^2 = 0.
    const auto ms = cubic_roots(Cplx(p), Cplx(p * p / 4.0 - r), Cplx(-q * q / 8.0));
    Cplx m = ms[0];
    for (const auto& cand : ms) {
      if (std::abs(cand) > std::abs(m)) m = cand;
    }
    const Cplx w = std::sqrt(2.0 * m);
    const Cplx k = q / (2.0 * w);
    const auto r1 = quadratic_roots(-w, p / 2.0 + m + k);
    const auto r2 = quadratic_roots(w, p / 2.0 + m - k);
    y = {r1[0], r1[1], r2[0], r2[1]};
  }
  std::array<Cplx, 4> x{};
  for (int i = 0; i < 4; ++i) x[i] = y[i] - s;
  return x;
}

template <std::size_t N>
Cplx horner(const std::array<double, N + 1>& c, Cplx x) {
  Cplx v = c[0];
  for (std::size_t i = 1; i <= N; ++i) v = v * x + c[i];
  return v;
}

template <std::size_t N>
Cplx horner_derivative(const std::array<double, N + 1>& c, Cplx x) {
  Cplx v = static_cast<double>(N) * c[0];
  for (std::size_t i = 1; i < N; ++i) {
    v = v * x + static_cast<double>(N - i) * c[i];
  }
  return v;
}

}  // namespace internal

/// Sorts by real part, then imaginary part.
template <std::size_t N>
void sort_eigenvalues(std::array<std::complex<double>, N>& ev) {
  std::sort(ev.begin(), ev.end(), [](const auto& a, const auto& b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
}

/// Eigenvalues of a real 4x4 matrix, sorted (real asc, then imag asc).
/// Throws ConvergenceFailure if a root cannot be polished below the
/// residual bound |det(A - λI)| <= 1e-8 max(‖A‖, 1)^4.
inline std::array<std::complex<double>, 4> eig4(const Matrix4& a) {
  for (const auto& row : a) {
    for (double v : row) {
      if (!std::isfinite(v)) {
        throw Error(ErrorKind::kNonFinite, "eig4: non-finite matrix entry");
      }
    }
  }
  const auto c = characteristic_polynomial<4>(a);
  auto roots = internal::quartic_roots(c[1], c[2], c[3], c[4]);
  const double norm = std::max(frobenius_norm(a), 1.0);
  const double bound = 1e-8 * std::pow(norm, 4);

  for (auto& lam : roots) {
    double res = std::abs(characteristic_determinant<4>(a, lam));
    int it = 0;
    for (; it < 50; ++it) {
      const auto p = internal::horner<4>(c, lam);
      const auto dp = internal::horner_derivative<4>(c, lam);
      if (dp == std::complex<double>(0.0) || p == std::complex<double>(0.0)) break;
      const auto cand = lam - p / dp;
      const double cand_res = std::abs(characteristic_determinant<4>(a, cand));
      if (!(cand_res < res)) break;
      lam = cand;
      res = cand_res;
      if (it > 0 && res <= bound) break;
    }
    if (!(res <= bound)) {
      throw Error(ErrorKind::kConvergenceFailure,
                  "eig4: residual " + std::to_string(res) + " above bound " +
                      std::to_string(bound));
    }
  }

  // Real input: clean conjugate pairs and round-off imaginary parts.
  const double tiny = 1e-12 * norm;
  for (auto& lam : roots) {
    if (std::abs(lam.imag()) <= tiny) lam = {lam.real(), 0.0};
  }
  sort_eigenvalues<4>(roots);
  for (std::size_t i = 0; i < 4; ++i) {
    if (roots[i].imag() == 0.0) continue;
    for (std::size_t j = i + 1; j < 4; ++j) {
      if (std::abs(roots[j] - std::conj(roots[i])) <= 1e-6 * norm) {
        const double re = 0.5 * (roots[i].real() + roots[j].real());
        const double im = 0.5 * (std::abs(roots[i].imag()) + std::abs(roots[j].imag()));
        roots[i] = {re, roots[i].imag() < 0 ? -im : im};
        roots[j] = std::conj(roots[i]);
        break;
      }
    }
  }
  sort_eigenvalues<4>(roots);
  return roots;
}

}  // namespace smib
