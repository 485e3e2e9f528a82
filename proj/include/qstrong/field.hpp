#pragma once

// Classical driving field: envelope, electric field, vector potential and
// ponderomotive energy. Atomic units throughout; the carrier is a cosine
// centred on the envelope peak so the field maximum sits at pulse centre.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "qstrong/errors.hpp"
#include "qstrong/numerics.hpp"

namespace qstrong {

enum class Envelope { sin2, gaussian, flat };

inline std::string to_string(Envelope e) {
  switch (e) {
  case Envelope::sin2: return "sin2";
  case Envelope::gaussian: return "gaussian";
  case Envelope::flat: return "flat";
  }
  return "?";
}

inline Envelope envelope_from_string(const std::string& s) {
  if (s == "sin2") return Envelope::sin2;
  if (s == "gaussian") return Envelope::gaussian;
  if (s == "flat") return Envelope::flat;
  throw ValidationError("envelope: unknown kind '" + s + "' (expected sin2|gaussian|flat)");
}

struct LaserParams {
  double E0 = 0.053;         // field amplitude
  double omega = 0.057;      // carrier angular frequency
  double Ip = 0.5;           // ionization potential
  double n_cycles = 12.0;    // pulse window length in optical cycles
  Envelope envelope = Envelope::sin2;
  double fwhm_cycles = 4.0;  // gaussian envelope FWHM (of f(t)), in cycles
  double g = 0.1;            // mode coupling along the polarization
  unsigned n_atoms = 1;
  cplx alpha_L{28.0, 0.0};   // initial coherent amplitude of the driving mode

  double period() const { return 2.0 * pi / omega; }
  double duration() const { return n_cycles * period(); }
  double wavelength_nm() const { return 2.0 * pi * au::speed_of_light / omega * au::bohr_nm; }

  /// Gaussian standard deviation of f(t) in a.u. of time.
  double sigma() const { return fwhm_cycles * period() / (2.0 * std::sqrt(2.0 * std::log(2.0))); }

  /// Carrier reference time (field maximum).
  double center() const { return envelope == Envelope::flat ? 0.0 : 0.5 * duration(); }

  void validate() const {
    using detail::require;
    require(std::isfinite(E0) && E0 >= 0.0, "E0 must be finite and >= 0");
    require(std::isfinite(omega) && omega > 0.0, "omega must be > 0");
    require(std::isfinite(Ip) && Ip > 0.0, "Ip must be > 0");
    require(n_atoms >= 1, "n_atoms must be >= 1");
    require(std::isfinite(g), "g must be finite");
    require(std::isfinite(alpha_L.real()) && std::isfinite(alpha_L.imag()), "alpha_L must be finite");
    require(std::isfinite(n_cycles) && n_cycles > 0.0, "n_cycles must be > 0");
    if (envelope == Envelope::sin2)
      require(n_cycles >= 2.0 && n_cycles == std::round(n_cycles),
              "sin2 envelope needs an integer n_cycles >= 2 (vector potential must vanish after the pulse)");
    if (envelope == Envelope::gaussian) {
      require(std::isfinite(fwhm_cycles) && fwhm_cycles > 0.0, "fwhm_cycles must be > 0");
      require(8.0 * sigma() <= duration() * (1.0 + 1e-12),
              "gaussian envelope truncated at +-4 sigma must fit in the n_cycles window");
    }
  }
};

/// Interval outside of which the envelope vanishes. Flat pulses report the
/// window [0, duration] even though they extend forever.
struct PulseSupport {
  double begin;
  double end;
};

inline PulseSupport pulse_support(const LaserParams& p) {
  if (p.envelope == Envelope::gaussian) {
    const double half = 4.0 * p.sigma();
    return {p.center() - half, p.center() + half};
  }
  return {0.0, p.duration()};
}

inline double ponderomotive(double E0, double omega) {
  detail::require(omega > 0.0, "ponderomotive: omega must be > 0");
  return E0 * E0 / (4.0 * omega * omega);
}

inline double envelope(double t, const LaserParams& p) {
  switch (p.envelope) {
  case Envelope::flat: return 1.0;
  case Envelope::sin2: {
    const double T = p.duration();
    if (t <= 0.0 || t >= T) return 0.0;
    const double s = std::sin(pi * t / T);
    return s * s;
  }
  case Envelope::gaussian: {
    const double u = t - p.center(), sig = p.sigma();
    if (std::abs(u) > 4.0 * sig) return 0.0;
    return std::exp(-0.5 * u * u / (sig * sig));
  }
  }
  return 0.0;
}

inline double classical_field(double t, const LaserParams& p) {
  return p.E0 * envelope(t, p) * std::cos(p.omega * (t - p.center()));
}

namespace analytic {

// Closed forms valid for flat and sin2 envelopes, where the field on its
// support is a finite sum of sinusoids  E(t) = sum_k c_k cos(nu_k t - phi).
// Templated on the scalar so the saddle-point solver can use complex times.
struct SinusoidSum {
  std::array<double, 3> c{};
  std::array<double, 3> nu{};
  std::size_t n = 0;
  double phi = 0.0;
  bool anchored = false;  // sin2: antiderivative pinned to a(0) = 0
  double T = 0.0;         // support end for sin2

  static SinusoidSum from(const LaserParams& p) {
    SinusoidSum s;
    s.phi = p.omega * p.center();
    if (p.envelope == Envelope::flat) {
      s.c = {p.E0, 0, 0};
      s.nu = {p.omega, 0, 0};
      s.n = 1;
    } else if (p.envelope == Envelope::sin2) {
      const double Om = 2.0 * pi / p.duration();
      s.c = {0.5 * p.E0, -0.25 * p.E0, -0.25 * p.E0};
      s.nu = {p.omega, p.omega + Om, p.omega - Om};
      s.n = 3;
      s.anchored = true;
      s.T = p.duration();
    } else {
      throw ValidationError("closed-form field only available for flat and sin2 envelopes");
    }
    return s;
  }

  template <class T>
  T field(T t) const {
    T e{};
    for (std::size_t k = 0; k < n; ++k) e += c[k] * std::cos(nu[k] * t - phi);
    return e;
  }

  /// a(t) = A(t)/c with E = -da/dt.
  template <class T>
  T a(T t) const {
    T v{};
    for (std::size_t k = 0; k < n; ++k) {
      const double s0 = anchored ? std::sin(-phi) : 0.0;
      v -= c[k] * (std::sin(nu[k] * t - phi) - s0) / nu[k];
    }
    return v;
  }

  /// Antiderivative of a(t) (zero at t = 0).
  template <class T>
  T int_a(T t) const {
    T v{};
    for (std::size_t k = 0; k < n; ++k) {
      const double s0 = anchored ? std::sin(-phi) : 0.0;
      v -= (c[k] / nu[k]) * ((std::cos(phi) - std::cos(nu[k] * t - phi)) / nu[k] - s0 * t);
    }
    return v;
  }

  /// Antiderivative of a(t)^2 (zero at t = 0).
  template <class T>
  T int_a2(T t) const {
    // a = a0 + sum_k b_k sin(nu_k t - phi)
    double a0 = 0.0;
    std::array<double, 3> b{};
    for (std::size_t k = 0; k < n; ++k) {
      b[k] = -c[k] / nu[k];
      if (anchored) a0 += c[k] * std::sin(-phi) / nu[k];
    }
    auto int_cos = [&](double mu, double psi) -> T {  // int_0^t cos(mu tau + psi)
      if (mu == 0.0) return t * std::cos(psi);
      return (std::sin(mu * t + psi) - std::sin(psi)) / mu;
    };
    auto int_sin = [&](double mu, double psi) -> T {  // int_0^t sin(mu tau + psi)
      if (mu == 0.0) return t * std::sin(psi);
      return (std::cos(psi) - std::cos(mu * t + psi)) / mu;
    };
    T v = a0 * a0 * t;
    for (std::size_t k = 0; k < n; ++k) v += 2.0 * a0 * b[k] * int_sin(nu[k], -phi);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t l = 0; l < n; ++l)
        v += 0.5 * b[k] * b[l] * (int_cos(nu[k] - nu[l], 0.0) - int_cos(nu[k] + nu[l], -2.0 * phi));
    return v;
  }
};

} // namespace analytic

/// A(t) including the factor c, so that E = -(1/c) dA/dt.
inline double vector_potential(double t, const LaserParams& p) {
  const double c = au::speed_of_light;
  switch (p.envelope) {
  case Envelope::flat: return c * analytic::SinusoidSum::from(p).a(t);
  case Envelope::sin2: {
    const double tt = std::clamp(t, 0.0, p.duration());
    if (t <= 0.0) return 0.0;
    return c * analytic::SinusoidSum::from(p).a(tt);
  }
  case Envelope::gaussian: {
    const auto sup = pulse_support(p);
    const double tt = std::min(t, sup.end);
    if (tt <= sup.begin) return 0.0;
    // piecewise per half cycle keeps the adaptive rule well conditioned
    const double step = 0.5 * p.period();
    double acc = 0.0;
    for (double lo = sup.begin; lo < tt; lo += step) {
      const double hi = std::min(lo + step, tt);
      acc += num::integrate([&](double s) { return classical_field(s, p); }, lo, hi, 1e-13);
    }
    return -c * acc;
  }
  }
  return 0.0;
}

/// Tabulated a(t)=A(t)/c together with the running integrals of a and a^2,
/// evaluated by cubic Hermite interpolation with exact derivatives.
/// Built once per field; used wherever many off-grid evaluations are needed.
class FieldTable {
public:
  FieldTable(const LaserParams& p, double t_lo, double t_hi, std::size_t per_cycle = 1024) : p_(p) {
    p.validate();
    if (p.envelope != Envelope::flat) {
      const auto sup = pulse_support(p);
      t_lo = std::max(t_lo, sup.begin);
      t_hi = std::min(t_hi, sup.end);
      if (t_hi <= t_lo) t_hi = t_lo + p.period();  // query window outside the pulse
    }
    const std::size_t n = std::max<std::size_t>(
        2, static_cast<std::size_t>(std::ceil((t_hi - t_lo) / p.period() * static_cast<double>(per_cycle))) + 1);
    t0_ = t_lo;
    h_ = (t_hi - t_lo) / static_cast<double>(n - 1);
    a_.assign(n, 0.0);
    i1_.assign(n, 0.0);
    i2_.assign(n, 0.0);
    e_.assign(n, 0.0);
    auto E = [&](double s) { return classical_field(s, p); };
    a_[0] = p.envelope == Envelope::flat ? analytic::SinusoidSum::from(p).a(t_lo) : 0.0;
    e_[0] = E(t_lo);
    for (std::size_t k = 0; k + 1 < n; ++k) {
      const double tk = t0_ + h_ * static_cast<double>(k);
      const double ak = a_[k];
      auto a_at = [&](double s) { return ak - num::gauss_legendre(E, tk, s); };
      a_[k + 1] = ak - num::gauss_legendre(E, tk, tk + h_);
      i1_[k + 1] = i1_[k] + num::gauss_legendre(a_at, tk, tk + h_);
      i2_[k + 1] = i2_[k] + num::gauss_legendre([&](double s) { const double v = a_at(s); return v * v; }, tk, tk + h_);
      e_[k + 1] = E(tk + h_);
    }
  }

  double begin() const { return t0_; }
  double end() const { return t0_ + h_ * static_cast<double>(a_.size() - 1); }

  double field(double t) const { return classical_field(t, p_); }

  double a(double t) const {
    if (t <= t0_) return p_.envelope == Envelope::flat ? a_.front() : 0.0;
    if (t >= end()) return a_.back();
    return hermite(t, a_, [&](std::size_t k) { return -e_[k]; });
  }
  double int_a(double t) const {
    if (t <= t0_) return a(t) * (t - t0_);
    if (t >= end()) return i1_.back() + a_.back() * (t - end());
    return hermite(t, i1_, [&](std::size_t k) { return a_[k]; });
  }
  double int_a2(double t) const {
    if (t <= t0_) return a(t) * a(t) * (t - t0_);
    if (t >= end()) return i2_.back() + a_.back() * a_.back() * (t - end());
    return hermite(t, i2_, [&](std::size_t k) { return a_[k] * a_[k]; });
  }

  const LaserParams& params() const { return p_; }

private:
  template <class D>
  double hermite(double t, const std::vector<double>& y, D&& dydt) const {
    const double u = (t - t0_) / h_;
    std::size_t k = static_cast<std::size_t>(u);
    if (k + 1 >= y.size()) k = y.size() - 2;
    const double s = u - static_cast<double>(k);
    const double s2 = s * s, s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s, h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
    return h00 * y[k] + h10 * h_ * dydt(k) + h01 * y[k + 1] + h11 * h_ * dydt(k + 1);
  }

  LaserParams p_;
  double t0_ = 0.0, h_ = 1.0;
  std::vector<double> a_, i1_, i2_, e_;
};

} // namespace qstrong
