#pragma once

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "qstrong/errors.hpp"

namespace qstrong {

using cplx = std::complex<double>;

inline constexpr double pi = std::numbers::pi;
inline constexpr cplx I{0.0, 1.0};

namespace au {
inline constexpr double speed_of_light = 137.035999084;
inline constexpr double bohr_nm = 0.0529177210903;
} // namespace au

namespace num {

/// Adaptive Gauss-Kronrod on [a, b] for real integrands.
template <class F>
double integrate(F&& f, double a, double b, double rel_tol = 1e-12, unsigned max_depth = 20) {
  if (a == b) return 0.0;
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, max_depth, rel_tol, &err);
}

/// Same, for complex-valued integrands (real and imaginary parts integrated separately).
template <class F>
cplx integrate_complex(F&& f, double a, double b, double rel_tol = 1e-12, unsigned max_depth = 20) {
  if (a == b) return {};
  double err = 0.0;
  auto re = [&](double t) { return std::real(f(t)); };
  auto im = [&](double t) { return std::imag(f(t)); };
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  return {GK::integrate(re, a, b, max_depth, rel_tol, &err), GK::integrate(im, a, b, max_depth, rel_tol, &err)};
}

/// Fixed 11-point Gauss-Legendre rule; works for any integrand value type.
template <class F>
auto gauss_legendre(F&& f, double a, double b) {
  // odd order: boost stores the centre node first, then the positive half
  using GL = boost::math::quadrature::gauss<double, 11>;
  const auto& x = GL::abscissa();
  const auto& w = GL::weights();
  const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  auto sum = w[0] * f(mid);
  for (std::size_t i = 1; i < x.size(); ++i) sum += w[i] * (f(mid - half * x[i]) + f(mid + half * x[i]));
  return sum * half;
}

/// Cumulative trapezoid with uniform step; out[0] = 0.
template <class T>
std::vector<T> cumulative_trapezoid(std::span<const T> y, double dt) {
  std::vector<T> out(y.size(), T{});
  for (std::size_t i = 1; i < y.size(); ++i) out[i] = out[i - 1] + 0.5 * dt * (y[i - 1] + y[i]);
  return out;
}

inline double log_factorial(unsigned n) { return std::lgamma(static_cast<double>(n) + 1.0); }

/// Poisson probability computed in log space.
inline double poisson_pmf(double mean, unsigned n) {
  if (mean <= 0.0) return n == 0 ? 1.0 : 0.0;
  return std::exp(n * std::log(mean) - mean - log_factorial(n));
}

/// Smallest n_max such that the Poisson tail beyond n_max is below tol.
inline unsigned poisson_cutoff(double mean, double tol) {
  if (mean <= 0.0) return 0;
  double cdf = 0.0;
  for (unsigned n = 0;; ++n) {
    cdf += poisson_pmf(mean, n);
    // pmf is tiny past the mode; 1 - cdf loses precision there, so also stop on the pmf itself
    if (1.0 - cdf < tol || (n > mean && poisson_pmf(mean, n + 1) < tol * 1e-3)) return n;
  }
}

/// Normalized Hermite functions psi_0..psi_nmax at x (oscillator eigenfunctions, x=(a+a^dag)/sqrt2).
inline std::vector<double> hermite_functions(double x, unsigned n_max) {
  std::vector<double> psi(n_max + 1);
  psi[0] = std::pow(pi, -0.25) * std::exp(-0.5 * x * x);
  if (n_max >= 1) psi[1] = std::sqrt(2.0) * x * psi[0];
  for (unsigned n = 2; n <= n_max; ++n)
    psi[n] = std::sqrt(2.0 / n) * x * psi[n - 1] - std::sqrt((n - 1.0) / n) * psi[n - 2];
  return psi;
}

/// Deterministic RNG: stream `stream` of generator family `seed`.
/// Uses only standard-specified algorithms so output is platform independent.
class Rng {
public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x5eedu};
    gen_.seed(seq);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * pi * u2);
  }

  std::uint64_t next() { return gen_(); }

private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Uniform grid helper: n points from lo to hi inclusive.
inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  if (n == 1) {
    v[0] = lo;
    return v;
  }
  for (std::size_t i = 0; i < n; ++i) v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

inline bool is_uniform(std::span<const double> t, double rel_tol = 1e-12) {
  if (t.size() < 2) return true;
  const double span = t.back() - t.front();
  const double dt = span / static_cast<double>(t.size() - 1);
  if (!(dt > 0.0)) return false;
  const double scale = std::max({std::abs(t.front()), std::abs(t.back()), span});
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double expect = t.front() + dt * static_cast<double>(i);
    if (std::abs(t[i] - expect) > rel_tol * scale) return false;
  }
  return true;
}

} // namespace num
} // namespace qstrong
