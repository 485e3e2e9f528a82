#pragma once

// Back-action of harmonic generation on the driving mode: the coherent shift
// delta-alpha(t), harmonic amplitudes beta_q, spectra, photon statistics and
// the cat / kitten states obtained by conditioning on harmonic emission.

#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "qstrong/errors.hpp"
#include "qstrong/field.hpp"
#include "qstrong/io.hpp"
#include "qstrong/numerics.hpp"
#include "qstrong/quantum_state.hpp"
#include "qstrong/sfa.hpp"

namespace qstrong::hhg {

struct ShiftTrace {
  std::vector<double> t;
  std::vector<cplx> delta_alpha;
  std::map<int, std::vector<cplx>> beta_q;
  std::vector<double> amplitude;  // |alpha_L + delta_alpha|
  std::vector<double> theta;      // alpha_L + delta_alpha = amplitude * exp(-i theta), unwrapped
};

/// delta_alpha(t) = N g int f d e^{i w tau}, beta_q(t) = N sqrt(q) g int f d e^{i q w tau}.
/// `orders` empty selects q = 2 .. ceil(cutoff order).
inline ShiftTrace coherent_shift_trace(const DipoleSeries& dip, const LaserParams& params, std::vector<int> orders = {}) {
  dip.validate();
  params.validate();
  const double dt = dip.dt();
  detail::require(dt <= params.period() / 200.0 * (1.0 + 1e-9),
                  "coherent_shift_trace: dipole grid under-resolved (need >= 200 points per cycle)");
  if (params.envelope != Envelope::flat) {
    const auto sup = pulse_support(params);
    detail::require(dip.t.front() <= sup.begin + dt && dip.t.back() > sup.begin,
                    "coherent_shift_trace: dipole grid does not start at the pulse onset");
  }
  if (orders.empty()) {
    const int qmax = params.E0 > 0.0 ? static_cast<int>(std::ceil(sfa::cutoff_order(params))) : 2;
    for (int q = 2; q <= qmax; ++q) orders.push_back(q);
  }
  for (int q : orders) detail::require(q >= 2, "coherent_shift_trace: harmonic orders start at 2");

  const std::size_t n = dip.t.size();
  const double Ng = static_cast<double>(params.n_atoms) * params.g;
  std::vector<double> fd(n);
  for (std::size_t i = 0; i < n; ++i) fd[i] = envelope(dip.t[i], params) * dip.d[i];

  auto integrate_at = [&](double freq) {
    std::vector<cplx> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = fd[i] * std::polar(1.0, freq * dip.t[i]);
    auto c = num::cumulative_trapezoid(std::span<const cplx>(y), dt);
    return c;
  };

  ShiftTrace tr;
  tr.t = dip.t;
  tr.delta_alpha = integrate_at(params.omega);
  for (auto& v : tr.delta_alpha) v *= Ng;
  for (int q : orders) {
    auto b = integrate_at(q * params.omega);
    const double s = Ng * std::sqrt(static_cast<double>(q));
    for (auto& v : b) v *= s;
    tr.beta_q[q] = std::move(b);
  }
  tr.amplitude.resize(n);
  tr.theta.resize(n);
  double prev = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const cplx z = params.alpha_L + tr.delta_alpha[i];
    tr.amplitude[i] = std::abs(z);
    double th = -std::arg(z);
    if (i > 0) th += 2.0 * pi * std::round((prev - th) / (2.0 * pi));
    tr.theta[i] = th;
    prev = th;
  }
  return tr;
}

inline double harmonic_photon_number(int q, const ShiftTrace& tr) {
  auto it = tr.beta_q.find(q);
  if (it == tr.beta_q.end()) throw ValidationError("harmonic_photon_number: order q=" + std::to_string(q) + " not in trace");
  return std::norm(it->second.back());
}

/// N^2 w^4 |d~(w)|^2 with d~ the Hann-windowed Fourier transform of the dipole.
inline std::vector<std::pair<double, double>> hhg_spectrum(const DipoleSeries& dip, std::span<const double> omega_grid,
                                                           const LaserParams& params) {
  dip.validate();
  for (double w : omega_grid) detail::require(std::isfinite(w) && w > 0.0, "hhg_spectrum: frequencies must be positive");
  const std::size_t n = dip.t.size();
  const double dt = dip.dt(), span = dip.t.back() - dip.t.front();
  std::vector<double> wd(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = std::sin(pi * (dip.t[i] - dip.t.front()) / span);
    wd[i] = s * s * dip.d[i];
  }
  const double N = static_cast<double>(params.n_atoms);
  std::vector<std::pair<double, double>> out;
  out.reserve(omega_grid.size());
  for (double w : omega_grid) {
    // recurrence for e^{i w t_k}
    const cplx step = std::polar(1.0, w * dt);
    cplx ph = std::polar(1.0, w * dip.t.front());
    cplx acc{};
    for (std::size_t i = 0; i < n; ++i) {
      if (i % 512 == 0) ph = std::polar(1.0, w * dip.t[i]);
      acc += wd[i] * ph;
      ph *= step;
    }
    acc *= dt;
    out.emplace_back(w, N * N * w * w * w * w * std::norm(acc));
  }
  return out;
}

struct QuadraturePoint {
  double t, x, p;
};

inline std::vector<QuadraturePoint> quadrature_trace(const ShiftTrace& tr, const LaserParams& params) {
  std::vector<QuadraturePoint> out(tr.t.size());
  const double s2 = std::sqrt(2.0);
  for (std::size_t i = 0; i < tr.t.size(); ++i) {
    const double ph = params.omega * tr.t[i] + tr.theta[i];
    out[i] = {tr.t[i], s2 * tr.amplitude[i] * std::cos(ph), -s2 * tr.amplitude[i] * std::sin(ph)};
  }
  return out;
}

/// Poisson weight |da|^{2n} e^{-|da|^2} / n!.
inline double photon_absorption_probability(cplx delta_alpha, unsigned n) {
  return num::poisson_pmf(std::norm(delta_alpha), n);
}

struct CycleAverage {
  std::vector<double> p;            // P~_n, n = 0..n_max
  std::optional<unsigned> n_cutoff; // strongest local maximum with n > 2
};

/// Time average over [cycle_start, cycle_start + T] of P_n for the shift
/// accumulated since cycle_start.
inline CycleAverage cycle_averaged_absorption(const ShiftTrace& tr, const LaserParams& params, double cycle_start,
                                              unsigned n_max) {
  const double T = params.period();
  detail::require(tr.t.size() >= 2, "cycle_averaged_absorption: empty trace");
  const double tol = 1e-9 * std::max(1.0, std::abs(tr.t.back()));
  detail::require(cycle_start >= tr.t.front() - tol && cycle_start + T <= tr.t.back() + tol,
                  "cycle_averaged_absorption: cycle lies outside the trace");
  const double dt = (tr.t.back() - tr.t.front()) / static_cast<double>(tr.t.size() - 1);
  auto interp = [&](double t) {
    double u = (t - tr.t.front()) / dt;
    std::size_t k = static_cast<std::size_t>(std::clamp(std::floor(u), 0.0, static_cast<double>(tr.t.size() - 2)));
    const double s = u - static_cast<double>(k);
    return (1.0 - s) * tr.delta_alpha[k] + s * tr.delta_alpha[k + 1];
  };
  std::vector<double> ts{cycle_start};
  std::vector<cplx> da{cplx{}};
  const cplx d0 = interp(cycle_start);
  for (std::size_t i = 0; i < tr.t.size(); ++i)
    if (tr.t[i] > cycle_start + tol && tr.t[i] < cycle_start + T - tol) {
      ts.push_back(tr.t[i]);
      da.push_back(tr.delta_alpha[i] - d0);
    }
  ts.push_back(cycle_start + T);
  da.push_back(interp(cycle_start + T) - d0);

  CycleAverage out;
  out.p.assign(n_max + 1, 0.0);
  for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
    const double h = 0.5 * (ts[k + 1] - ts[k]) / T;
    for (unsigned n = 0; n <= n_max; ++n)
      out.p[n] += h * (photon_absorption_probability(da[k], n) + photon_absorption_probability(da[k + 1], n));
  }
  double best = -1.0;
  for (unsigned n = 3; n <= n_max; ++n) {
    const bool left = out.p[n] > out.p[n - 1];
    const bool right = n == n_max || out.p[n] >= out.p[n + 1];
    if (left && right && out.p[n] > best) {
      best = out.p[n];
      out.n_cutoff = n;
    }
  }
  return out;
}

inline std::pair<cplx, cplx> attenuate(cplx alpha, cplx delta_alpha, double r) {
  detail::require(std::isfinite(r) && r >= 0.0 && r <= 0.5 * pi, "attenuate: r must lie in [0, pi/2]");
  // cos(pi/2) is 6e-17 in floating point; snap the end point
  const double c = r == 0.5 * pi ? 0.0 : std::cos(r);
  return {c * alpha, c * delta_alpha};
}

// ---------------------------------------------------------------------------
// conditioned states

struct CatStateParams {
  cplx alpha;
  cplx delta_alpha;
  cplx epsilon;  // <alpha|alpha + delta_alpha>
  double norm;   // sqrt(1 - e^{-|delta_alpha|^2})

  double norm2() const { return norm * norm; }

  /// (1/norm)(|alpha + delta_alpha> - epsilon |alpha>)
  CoherentSuperposition superposition() const {
    return {{{1.0 / norm, alpha + delta_alpha}, {-epsilon / norm, alpha}}};
  }

  /// Closed-form <n>.
  double mean_photon_number() const {
    const cplx b = alpha + delta_alpha;
    const double e2 = std::norm(epsilon);
    return (std::norm(b) - 2.0 * e2 * std::real(std::conj(alpha) * b) + e2 * std::norm(alpha)) / norm2();
  }
};

inline CatStateParams condition_on_hhg(cplx alpha, cplx delta_alpha) {
  detail::require(std::isfinite(std::abs(alpha)) && std::isfinite(std::abs(delta_alpha)), "condition_on_hhg: non-finite input");
  if (std::abs(delta_alpha) == 0.0)
    throw ValidationError("condition_on_hhg: delta_alpha = 0 gives the null conditioned state");
  CatStateParams c;
  c.alpha = alpha;
  c.delta_alpha = delta_alpha;
  c.epsilon = coherent_overlap(alpha, alpha + delta_alpha);
  c.norm = std::sqrt(-std::expm1(-std::norm(delta_alpha)));
  return c;
}

/// Builds alpha with the given magnitude on the real axis and delta_alpha at a
/// relative phase (pi: antiparallel, pure depletion).
inline CatStateParams cat_from_magnitudes(double abs_alpha, double abs_delta, double relative_phase = pi) {
  return condition_on_hhg(cplx(abs_alpha, 0.0), std::polar(abs_delta, relative_phase));
}

namespace impl {
inline void require_tail(const std::vector<cplx>& amps, unsigned n_max, const std::string& who, double tol = 1e-12) {
  const unsigned need = required_n_max(amps, tol);
  if (need > n_max)
    throw ValidationError(who + ": n_max=" + std::to_string(n_max) + " does not cover the tail, need n_max >= " +
                          std::to_string(need));
}
} // namespace impl

inline std::vector<double> cat_photon_distribution(const CatStateParams& cat, unsigned n_max) {
  const cplx b = cat.alpha + cat.delta_alpha;
  impl::require_tail({b, cat.alpha}, n_max, "cat_photon_distribution");
  std::vector<double> P(n_max + 1);
  cplx u = std::exp(-0.5 * std::norm(b)), v = cat.epsilon * std::exp(-0.5 * std::norm(cat.alpha));
  for (unsigned n = 0; n <= n_max; ++n) {
    if (n > 0) {
      const double s = 1.0 / std::sqrt(static_cast<double>(n));
      u *= b * s;
      v *= cat.alpha * s;
    }
    P[n] = std::norm(u - v) / cat.norm2();
  }
  return P;
}

inline double cat_wigner_value(const CatStateParams& cat, cplx beta) {
  const cplx a = cat.alpha, d = cat.delta_alpha;
  const double e = std::exp(-std::norm(d)), g0 = std::exp(-2.0 * std::norm(beta - a));
  return 2.0 / (pi * cat.norm2()) *
         (std::exp(-2.0 * std::norm(beta - a - d)) + e * g0 - 2.0 * std::real(std::exp(2.0 * (beta - a) * std::conj(d))) * e * g0);
}

inline WignerGrid cat_wigner(const CatStateParams& cat, const GridAxes& ax) {
  require_span(ax, {cat.alpha, cat.alpha + cat.delta_alpha}, "cat_wigner");
  WignerGrid g = ax.make();
  g.fill([&](cplx b) { return cat_wigner_value(cat, b); });
  return g;
}

inline double kitten_wigner_value(cplx alpha, cplx beta) {
  const double r2 = std::norm(beta - alpha);
  return 2.0 / pi * (4.0 * r2 - 1.0) * std::exp(-2.0 * r2);
}

inline WignerGrid kitten_wigner(cplx alpha, const GridAxes& ax) {
  require_span(ax, {alpha}, "kitten_wigner");
  WignerGrid g = ax.make();
  g.fill([&](cplx b) { return kitten_wigner_value(alpha, b); });
  return g;
}

/// |n/alpha - alpha*|^2 |alpha|^{2n} e^{-|alpha|^2}/n!; alpha = 0 is the one-photon state.
inline std::vector<double> kitten_photon_distribution(cplx alpha, unsigned n_max) {
  std::vector<double> P(n_max + 1, 0.0);
  const double m = std::norm(alpha);
  if (m == 0.0) {
    detail::require(n_max >= 1, "kitten_photon_distribution: n_max must be >= 1");
    P[1] = 1.0;
    return P;
  }
  impl::require_tail({alpha}, n_max + 1, "kitten_photon_distribution");
  for (unsigned n = 0; n <= n_max; ++n) {
    const double k = static_cast<double>(n) - m;
    P[n] = k * k / m * num::poisson_pmf(m, n);
  }
  return P;
}

/// True iff arg(delta) lies strictly inside the depletion window around arg(alpha) + pi.
/// Points within 1e-12 rad of either edge count as outside.
inline bool depletion_phase_window(cplx alpha, cplx delta_alpha) {
  const double a = std::abs(alpha), d = std::abs(delta_alpha);
  detail::require(a > 0.0 && d > 0.0, "depletion_phase_window: alpha and delta_alpha must be nonzero");
  detail::require(d <= 2.0 * a, "depletion_phase_window: need |delta_alpha| <= 2|alpha| (arcsin domain)");
  const double s = std::asin(d / (2.0 * a));
  double rel = std::arg(delta_alpha) - std::arg(alpha);
  rel = std::fmod(rel, 2.0 * pi);
  if (rel < 0.0) rel += 2.0 * pi;
  const double lo = 0.5 * pi + s, hi = 1.5 * pi - s, eps = 1e-12;
  return rel > lo + eps && rel < hi - eps;
}

// ---------------------------------------------------------------------------
// CSV

inline std::string shift_trace_csv(const ShiftTrace& tr) {
  std::ostringstream os;
  os << "t_au,dalpha_re,dalpha_im,amp,theta\n";
  for (std::size_t i = 0; i < tr.t.size(); ++i)
    os << io::fmt(tr.t[i]) << ',' << io::fmt(tr.delta_alpha[i].real()) << ',' << io::fmt(tr.delta_alpha[i].imag()) << ','
       << io::fmt(tr.amplitude[i]) << ',' << io::fmt(tr.theta[i]) << '\n';
  return os.str();
}

inline std::string spectrum_csv(const std::vector<std::pair<double, double>>& s) {
  std::ostringstream os;
  os << "omega_au,intensity\n";
  for (const auto& [w, v] : s) os << io::fmt(w) << ',' << io::fmt(v) << '\n';
  return os.str();
}

} // namespace qstrong::hhg
