#pragma once

// Field states conditioned on above-threshold ionization.
//
// Both Wigner functions are built from terms of the form (u x + w) G(x), with G
// a coherent-state wavefunction, so every y-integral of the Wigner transform is
// a Gaussian moment of degree <= 2 and is evaluated in closed form.

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qstrong/errors.hpp"
#include "qstrong/field.hpp"
#include "qstrong/numerics.hpp"
#include "qstrong/quantum_state.hpp"
#include "qstrong/sfa.hpp"

namespace qstrong::ati {

inline constexpr double max_delta = 0.95;

struct HalfCycleCoeffs {
  cplx A, B;
  cplx c_plus, c_minus;  // (A +- B)/sqrt2
};

struct AtiSingleConfig {
  unsigned n_halfcycles = 8;
  cplx delta{0.5, 0.0};
  double v = 0.0;
  std::vector<std::pair<cplx, cplx>> coeffs;  // (A_j, B_j)

  void validate() const {
    using qstrong::detail::require;
    require(n_halfcycles >= 1, "ati-single: n_halfcycles must be >= 1");
    require(std::isfinite(delta.real()) && std::isfinite(delta.imag()), "ati-single: delta must be finite");
    require(std::abs(delta) < max_delta, "ati-single: |delta| must be < 0.95 (consecutive half-cycle states must overlap)");
    require(std::isfinite(v), "ati-single: v must be finite");
    require(coeffs.size() == n_halfcycles, "ati-single: need one (A_j, B_j) pair per half-cycle");
    bool any = false;
    for (const auto& [a, b] : coeffs) {
      require(std::isfinite(std::abs(a)) && std::isfinite(std::abs(b)), "ati-single: non-finite coefficient");
      any = any || a != cplx{} || b != cplx{};
    }
    require(any, "ati-single: all half-cycle coefficients vanish");
  }
};

struct AtiTotalConfig {
  cplx delta_alpha{0.1, 0.0};
  std::array<cplx, 4> weights{cplx{1.0}, cplx{1.0}, cplx{1.0}, cplx{1.0}};

  void validate() const {
    using qstrong::detail::require;
    require(std::isfinite(delta_alpha.real()) && std::isfinite(delta_alpha.imag()), "ati-total: delta_alpha must be finite");
    bool any = false;
    for (const cplx& w : weights) {
      require(std::isfinite(w.real()) && std::isfinite(w.imag()), "ati-total: weights must be finite");
      any = any || w != cplx{};
    }
    require(any, "ati-total: degenerate weights (all four are zero)");
  }
};

/// Direct-ionization dipole d*(p - a(t)) exp[-i(S(p, t, t0) - Ip t)] for an
/// electron born at t0 (default: the field maximum) with drift momentum v.
inline cplx ati_direct_dipole(double v, double t, const LaserParams& params, std::optional<double> t0 = std::nullopt) {
  params.validate();
  qstrong::detail::require(std::isfinite(v) && std::isfinite(t), "ati_direct_dipole: non-finite input");
  const double up = ponderomotive(params.E0, params.omega);
  qstrong::detail::require(0.5 * v * v <= 2.0 * up,
                           "ati_direct_dipole: kinetic energy above 2 Up (rescattering is not modeled)");
  const double c = au::speed_of_light;
  const double ti = t0.value_or(params.center());
  const double p = v + vector_potential(ti, params) / c;
  const double k = p - vector_potential(t, params) / c;
  const cplx S = sfa::action(cplx(p), t, ti, params);
  return std::conj(bound_continuum_dipole(k, params.Ip)) * std::exp(-I * (S - params.Ip * t));
}

/// A_j = g int d*_H e^{i w t}, B_j = g int d*_H e^{-i w t} over half-cycle j.
/// Needs a flat envelope (the half-cycles must be equivalent).
inline HalfCycleCoeffs halfcycle_coeffs(unsigned j, double v, const LaserParams& params, double rel_tol = 1e-12) {
  params.validate();
  qstrong::detail::require(params.envelope == Envelope::flat,
                           "halfcycle_coeffs: needs a flat envelope over the half-cycle window");
  const double half = 0.5 * params.period();
  const double lo = j * half, hi = lo + half;
  const double t0 = params.center();
  auto dh = [&](double t) { return ati_direct_dipole(v, t, params, t0); };
  HalfCycleCoeffs c;
  c.A = params.g * num::integrate_complex([&](double t) { return dh(t) * std::polar(1.0, params.omega * t); }, lo, hi, rel_tol);
  c.B = params.g * num::integrate_complex([&](double t) { return dh(t) * std::polar(1.0, -params.omega * t); }, lo, hi, rel_tol);
  c.c_plus = (c.A + c.B) / std::sqrt(2.0);
  c.c_minus = (c.A - c.B) / std::sqrt(2.0);
  return c;
}

/// Config whose coefficients come from the direct-ionization dipole of `params`.
inline AtiSingleConfig make_single_config(unsigned n_halfcycles, cplx delta, double v, const LaserParams& params) {
  AtiSingleConfig cfg{n_halfcycles, delta, v, {}};
  for (unsigned j = 0; j < n_halfcycles; ++j) {
    const auto c = halfcycle_coeffs(j, v, params);
    cfg.coeffs.emplace_back(c.A, c.B);
  }
  cfg.validate();
  return cfg;
}

namespace impl {

// (u x + w) pi^{-1/4} exp[-(x - x0)^2/2 + i k x]
struct LinearGaussian {
  cplx u, w;
  double x0, k;
};

// coefficient * x|a>  and  coefficient * d/dx |a>, coherent phase folded in
inline LinearGaussian times_x(cplx c, cplx a) {
  const cplx ph = c * std::polar(1.0, -a.real() * a.imag());
  return {ph, 0.0, std::sqrt(2.0) * a.real(), std::sqrt(2.0) * a.imag()};
}

inline LinearGaussian derivative(cplx c, cplx a) {
  const cplx ph = c * std::polar(1.0, -a.real() * a.imag());
  const double x0 = std::sqrt(2.0) * a.real(), k = std::sqrt(2.0) * a.imag();
  return {-ph, ph * cplx(x0, k), x0, k};
}

inline LinearGaussian add_same_centre(const LinearGaussian& f, const LinearGaussian& g) {
  return {f.u + g.u, f.w + g.w, f.x0, f.k};
}

// (1/pi) int f(x+y) g*(x-y) e^{-2ipy} dy
inline cplx cross_wigner(const LinearGaussian& f, const LinearGaussian& g, double x, double p) {
  const cplx b(f.x0 - g.x0, f.k + g.k - 2.0 * p);
  const double df = x - f.x0, dg = x - g.x0;
  const cplx c0(-0.5 * (df * df + dg * dg), (f.k - g.k) * x);
  const cplx pf = f.u * x + f.w, pg = std::conj(g.u) * x + std::conj(g.w);
  const cplx poly = pf * pg + 0.5 * b * (f.u * pg - std::conj(g.u) * pf) - f.u * std::conj(g.u) * (0.25 * b * b + 0.5);
  return std::exp(c0 + 0.25 * b * b) * poly / pi;
}

// <g|f>
inline cplx overlap(const LinearGaussian& g, const LinearGaussian& f) {
  const cplx c(f.x0 + g.x0, f.k - g.k);
  const cplx gu = std::conj(g.u), gw = std::conj(g.w);
  const cplx poly = gu * f.u * (0.25 * c * c + 0.5) + 0.5 * c * (gu * f.w + gw * f.u) + gw * f.w;
  return std::exp(0.25 * c * c - 0.5 * (f.x0 * f.x0 + g.x0 * g.x0)) * poly;
}

// Grid of sum_rs M_rs W[f_r, f_s], normalized by its trace; imaginary residue checked.
inline WignerGrid mixture_wigner(const std::vector<LinearGaussian>& f, const Eigen::MatrixXcd& M, const GridAxes& ax,
                                 const std::string& who) {
  cplx trace{};
  for (std::size_t r = 0; r < f.size(); ++r)
    for (std::size_t s = 0; s < f.size(); ++s) trace += M(r, s) * overlap(f[s], f[r]);
  const double scale = std::max(1.0, std::abs(trace));
  qstrong::detail::require(std::abs(trace) > 1e-300 && std::abs(trace.imag()) <= 1e-10 * scale && trace.real() > 0.0,
                           who + ": state has no positive norm (degenerate coefficients or weights)");
  WignerGrid g = ax.make();
  const std::size_t nx = g.x_axis.size(), np = g.p_axis.size();
  Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(np), static_cast<Eigen::Index>(nx));
  // the exponent of cross_wigner splits into an x part and a p part
  std::vector<cplx> ex(nx), pf(nx), pg(nx), bp(np), ep(np);
  for (std::size_t r = 0; r < f.size(); ++r)
    for (std::size_t s = 0; s < f.size(); ++s) {
      if (M(r, s) == cplx{}) continue;
      const LinearGaussian &a = f[r], &b = f[s];
      const cplx gu = std::conj(b.u), uu = a.u * gu;
      for (std::size_t ix = 0; ix < nx; ++ix) {
        const double x = g.x_axis[ix], da = x - a.x0, db = x - b.x0;
        ex[ix] = M(r, s) * std::exp(cplx(-0.5 * (da * da + db * db), (a.k - b.k) * x)) / pi;
        pf[ix] = a.u * x + a.w;
        pg[ix] = gu * x + std::conj(b.w);
      }
      for (std::size_t ip = 0; ip < np; ++ip) {
        bp[ip] = cplx(a.x0 - b.x0, a.k + b.k - 2.0 * g.p_axis[ip]);
        ep[ip] = std::exp(0.25 * bp[ip] * bp[ip]);
      }
      for (std::size_t ip = 0; ip < np; ++ip) {
        const cplx bb = bp[ip], q = uu * (0.25 * bb * bb + 0.5);
        for (std::size_t ix = 0; ix < nx; ++ix) {
          const cplx poly = pf[ix] * pg[ix] + 0.5 * bb * (a.u * pg[ix] - gu * pf[ix]) - q;
          acc(static_cast<Eigen::Index>(ip), static_cast<Eigen::Index>(ix)) += ex[ix] * ep[ip] * poly;
        }
      }
    }
  // density units -> parity-normalized values
  acc *= 2.0 / trace.real();
  const double max_abs = acc.real().cwiseAbs().maxCoeff(), max_im = acc.imag().cwiseAbs().maxCoeff();
  g.values = acc.real();
  if (max_im > 1e-10 * std::max(max_abs, 1e-300))
    throw ValidationError(who + ": Wigner function is not real (imaginary residue " + std::to_string(max_im) +
                          "); the weights do not define a Hermitian state");
  return g;
}

} // namespace impl

/// State vector sum_j i (C-_j x + C+_j d/dx) |(j+1) delta> as linear-Gaussian terms.
inline std::vector<impl::LinearGaussian> single_state_terms(const AtiSingleConfig& cfg) {
  std::vector<impl::LinearGaussian> out;
  for (unsigned j = 0; j < cfg.n_halfcycles; ++j) {
    const auto [A, B] = cfg.coeffs[j];
    const cplx cp = (A + B) / std::sqrt(2.0), cm = (A - B) / std::sqrt(2.0);
    const cplx a = static_cast<double>(j + 1) * cfg.delta;
    out.push_back(impl::add_same_centre(impl::times_x(I * cm, a), impl::derivative(I * cp, a)));
  }
  return out;
}

inline WignerGrid ati_single_wigner(const AtiSingleConfig& cfg, const GridAxes& ax) {
  cfg.validate();
  ax.validate();
  std::vector<cplx> centres;
  for (unsigned j = 0; j < cfg.n_halfcycles; ++j) centres.push_back(static_cast<double>(j + 1) * cfg.delta);
  require_span(ax, centres, "ati_single_wigner");
  const auto terms = single_state_terms(cfg);
  const Eigen::MatrixXcd M = Eigen::MatrixXcd::Ones(static_cast<Eigen::Index>(terms.size()), static_cast<Eigen::Index>(terms.size()));
  return impl::mixture_wigner(terms, M, ax, "ati_single_wigner");
}

/// W ~ w1 W[xG, xG] + w2 W[pG, pG] - w3 W[xG, pG] - w4 W[pG, xG], p = -i d/dx,
/// G = |delta_alpha>; the four weights stand in for the time integrals.
inline WignerGrid ati_total_wigner(const AtiTotalConfig& cfg, const GridAxes& ax) {
  cfg.validate();
  ax.validate();
  require_span(ax, {cfg.delta_alpha}, "ati_total_wigner");
  const std::vector<impl::LinearGaussian> f{impl::times_x(1.0, cfg.delta_alpha), impl::derivative(-I, cfg.delta_alpha)};
  const auto& w = cfg.weights;
  Eigen::MatrixXcd M(2, 2);
  M << w[0], -w[2], -w[3], w[1];
  return impl::mixture_wigner(f, M, ax, "ati_total_wigner");
}

} // namespace qstrong::ati
