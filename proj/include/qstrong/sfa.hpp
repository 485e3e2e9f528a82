#pragma once

// Strong-field approximation: semiclassical action, hydrogenic bound-continuum
// dipole, complex saddle points of the three-step model, and the induced
// dipole d_H(t) from the stationary-momentum integral over excursion time.
//
// Sign convention: kinetic momentum is p - a(t) with a = A/c and E = -da/dt.

#include <Eigen/Dense>
#include <boost/math/interpolators/makima.hpp>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "qstrong/errors.hpp"
#include "qstrong/field.hpp"
#include "qstrong/io.hpp"
#include "qstrong/numerics.hpp"

namespace qstrong {

/// Uniformly sampled real dipole expectation d_H(t).
struct DipoleSeries {
  std::vector<double> t;
  std::vector<double> d;

  double dt() const { return t.size() > 1 ? (t.back() - t.front()) / static_cast<double>(t.size() - 1) : 0.0; }

  void validate() const {
    detail::require(t.size() == d.size(), "dipole series: t and d lengths differ");
    detail::require(t.size() >= 2, "dipole series: need at least two samples");
    detail::require(num::is_uniform(t), "dipole series: time grid must be ascending and uniform");
    for (double v : d) detail::require(std::isfinite(v), "dipole series: non-finite sample");
  }
};

/// Hydrogenic 1s bound-continuum matrix element along the polarization axis.
inline cplx bound_continuum_dipole(double k, double Ip) {
  detail::require(std::isfinite(k), "bound_continuum_dipole: non-finite momentum");
  const double a2 = 2.0 * Ip;
  const double pref = std::pow(2.0, 3.5) * std::pow(a2, 1.25) / pi;
  const double den = k * k + a2;
  return I * (pref * k / (den * den * den));
}

inline std::array<cplx, 3> bound_continuum_dipole(const std::array<double, 3>& p, double Ip) {
  for (double c : p) detail::require(std::isfinite(c), "bound_continuum_dipole: non-finite momentum");
  const double a2 = 2.0 * Ip;
  const double pref = std::pow(2.0, 3.5) * std::pow(a2, 1.25) / pi;
  const double den = p[0] * p[0] + p[1] * p[1] + p[2] * p[2] + a2;
  const double s = pref / (den * den * den);
  return {I * (s * p[0]), I * (s * p[1]), I * (s * p[2])};
}

namespace sfa {

enum class ActionMethod { automatic, quadrature };

/// S(p, t, t') in closed form; flat and sin2 envelopes only, any complex times
/// (for sin2 the times must lie in the pulse support on the real axis).
template <class T>
T action_closed_form(T p, T t, T tp, const LaserParams& params) {
  const auto s = analytic::SinusoidSum::from(params);
  const T dt = t - tp;
  return 0.5 * (p * p * dt - 2.0 * p * (s.int_a(t) - s.int_a(tp)) + (s.int_a2(t) - s.int_a2(tp))) + params.Ip * dt;
}

/// Semiclassical action 1/2 int_{t'}^{t} (p - a)^2 + Ip (t - t') along the real time axis.
inline cplx action(cplx p, double t, double tp, const LaserParams& params,
                   ActionMethod method = ActionMethod::automatic) {
  qstrong::detail::require(std::isfinite(p.real()) && std::isfinite(p.imag()) && std::isfinite(t) && std::isfinite(tp),
                  "action: non-finite input");
  params.validate();
  if (t == tp) return {};
  const bool closed = method == ActionMethod::automatic &&
                      (params.envelope == Envelope::flat ||
                       (params.envelope == Envelope::sin2 && std::min(t, tp) >= 0.0 &&
                        std::max(t, tp) <= params.duration()));
  if (closed) return action_closed_form<cplx>(p, t, tp, params);
  const double c = au::speed_of_light;
  // split into quarter cycles so the adaptive rule sees smooth pieces
  const double lo = std::min(t, tp), hi = std::max(t, tp), step = 0.25 * params.period();
  cplx acc{};
  for (double s = lo; s < hi; s += step) {
    const double e = std::min(s + step, hi);
    acc += num::integrate_complex(
        [&](double tau) {
          const cplx v = p - vector_potential(tau, params) / c;
          return v * v;
        },
        s, e, 1e-13);
  }
  if (t < tp) acc = -acc;
  return 0.5 * acc + params.Ip * (t - tp);
}

// ---------------------------------------------------------------------------
// classical three-step trajectories (real times, any envelope)

struct ClassicalReturn {
  double t_i;
  double t_r;
  double energy;  // return kinetic energy
};

class ClassicalModel {
public:
  explicit ClassicalModel(const LaserParams& p)
      : p_(p), T0_(p.period()), table_(p, first_peak(p) - 2.0 * p.period(), last_peak(p) + 2.0 * p.period(), 2048) {}

  /// Field-maximum time of half-cycle k, counted from the pulse centre.
  double peak(int k) const { return p_.center() + 0.5 * T0_ * k; }

  /// Electron born at rest at t_i; first return within one cycle, if any.
  std::optional<ClassicalReturn> trajectory(double ti) const {
    const double p = table_.a(ti), I1i = table_.int_a(ti);
    auto X = [&](double t) { return p * (t - ti) - (table_.int_a(t) - I1i); };
    const int n = 512;
    const double h = T0_ / n;
    double prev_t = ti + 0.25 * h, prev = X(prev_t);
    for (int k = 1; k <= n; ++k) {
      const double tt = ti + k * h;
      const double cur = X(tt);
      if ((prev < 0.0) != (cur < 0.0) && prev != 0.0) {
        std::uintmax_t it = 100;
        auto tol = [](double a, double b) { return std::abs(b - a) < 1e-13 * std::max(1.0, std::abs(a)); };
        auto r = boost::math::tools::toms748_solve(X, prev_t, tt, prev, cur, tol, it);
        const double tr = 0.5 * (r.first + r.second);
        const double v = p - table_.a(tr);
        return ClassicalReturn{ti, tr, 0.5 * v * v};
      }
      prev_t = tt;
      prev = cur;
    }
    return std::nullopt;
  }

  double return_energy(double ti) const {
    auto r = trajectory(ti);
    return r ? r->energy : 0.0;
  }

  /// Ionization time of maximal return energy in half-cycle k.
  ClassicalReturn cutoff(int k) const {
    const double lo = peak(k) + 0.002 * T0_, hi = peak(k) + 0.24 * T0_;
    auto r = boost::math::tools::brent_find_minima([&](double ti) { return -return_energy(ti); }, lo, hi, 40);
    auto tr = trajectory(r.first);
    if (!tr) throw ConvergenceError("classical cutoff: no returning trajectory in half-cycle");
    return *tr;
  }

  /// Ionization time on the given branch with return energy K (clamped to the branch ends).
  double ionization_time(int k, double K, bool long_branch) const {
    const auto c = cutoff(k);
    double lo = long_branch ? peak(k) + 0.002 * T0_ : c.t_i;
    double hi = long_branch ? c.t_i : peak(k) + 0.24 * T0_;
    auto f = [&](double ti) { return return_energy(ti) - K; };
    const double flo = f(lo), fhi = f(hi);
    if ((flo < 0.0) == (fhi < 0.0)) return std::abs(flo) < std::abs(fhi) ? lo : hi;
    std::uintmax_t it = 100;
    auto tol = [](double a, double b) { return std::abs(b - a) < 1e-12 * std::max(1.0, std::abs(a)); };
    auto r = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, it);
    return 0.5 * (r.first + r.second);
  }

  const FieldTable& table() const { return table_; }

private:
  static double first_peak(const LaserParams& p) {
    return p.envelope == Envelope::flat ? -p.period() : p.center() - 0.5 * p.period();
  }
  static double last_peak(const LaserParams& p) {
    return p.envelope == Envelope::flat ? 2.0 * p.period() : p.center() + 0.5 * p.period();
  }

  LaserParams p_;
  double T0_;
  FieldTable table_;
};

/// Maximal classical return kinetic energy around the pulse centre.
inline double classical_cutoff_energy(const LaserParams& p) {
  p.validate();
  if (p.E0 == 0.0) return 0.0;
  ClassicalModel m(p);
  return std::max(m.cutoff(0).energy, m.cutoff(-1).energy);
}

/// Harmonic order of the classical cutoff (Ip + maximal return energy) / omega.
inline double cutoff_order(const LaserParams& p) { return (p.Ip + classical_cutoff_energy(p)) / p.omega; }

// ---------------------------------------------------------------------------
// complex saddle points

enum class Branch { short_trajectory, long_trajectory };

inline std::string to_string(Branch b) { return b == Branch::short_trajectory ? "short" : "long"; }

struct SaddleSolution {
  double q = 0.0;
  cplx p_s;
  cplx t_i;
  cplx t_r;
  Branch branch = Branch::short_trajectory;
  int halfcycle = 0;
  bool post_cutoff = false;
};

struct SaddleOptions {
  std::vector<int> halfcycles;  // empty: the two half-cycles of the reference cycle
  int max_iterations = 100;
  double tolerance = 1e-12;     // target residual
  double accept = 1e-10;        // residual that still counts as converged
};

namespace impl {

struct SaddleSystem {
  analytic::SinusoidSum s;
  double Ip;
  double energy;  // q omega
  double ip_scale = 1.0;

  Eigen::Vector3cd F(const Eigen::Vector3cd& x) const {
    const cplx p = x(0), ti = x(1), tr = x(2);
    const cplx vi = p - s.a(ti), vr = p - s.a(tr);
    Eigen::Vector3cd f;
    f(0) = p * (tr - ti) - (s.int_a(tr) - s.int_a(ti));
    f(1) = 0.5 * vi * vi + ip_scale * Ip;
    f(2) = 0.5 * vr * vr + Ip - energy;
    return f;
  }

  Eigen::Matrix3cd J(const Eigen::Vector3cd& x) const {
    const cplx p = x(0), ti = x(1), tr = x(2);
    const cplx vi = p - s.a(ti), vr = p - s.a(tr);
    Eigen::Matrix3cd j;
    j << tr - ti, -vi, vr,
         vi, vi * s.field(ti), 0.0,
         vr, 0.0, vr * s.field(tr);
    return j;
  }
};

inline double max_abs(const Eigen::Vector3cd& v) { return v.cwiseAbs().maxCoeff(); }

inline std::optional<Eigen::Vector3cd> newton(const SaddleSystem& sys, Eigen::Vector3cd x, double half_cycle,
                                              const SaddleOptions& opt) {
  Eigen::Vector3cd f = sys.F(x);
  double nf = max_abs(f);
  for (int it = 0; it < opt.max_iterations; ++it) {
    if (nf < opt.tolerance) break;
    Eigen::Vector3cd dx = sys.J(x).partialPivLu().solve(-f);
    if (!dx.allFinite()) return std::nullopt;
    const double tstep = std::max(std::abs(dx(1)), std::abs(dx(2)));
    if (tstep > half_cycle) dx *= half_cycle / tstep;
    double lam = 1.0;
    Eigen::Vector3cd xn = x + dx, fn = sys.F(xn);
    for (int k = 0; k < 30 && !(max_abs(fn) < nf); ++k) {
      lam *= 0.5;
      xn = x + lam * dx;
      fn = sys.F(xn);
    }
    if (!(max_abs(fn) < nf) && lam < 1e-8) break;
    x = xn;
    f = fn;
    nf = max_abs(f);
  }
  if (!(nf < opt.accept)) return std::nullopt;
  return x;
}

} // namespace impl

/// Residuals of the three saddle equations at a solution.
inline std::array<cplx, 3> saddle_residuals(const SaddleSolution& s, const LaserParams& params) {
  qstrong::detail::require(params.envelope != Envelope::gaussian, "saddle_residuals: flat or sin2 envelope required");
  impl::SaddleSystem sys{analytic::SinusoidSum::from(params), params.Ip, s.q * params.omega};
  const auto f = sys.F(Eigen::Vector3cd(s.p_s, s.t_i, s.t_r));
  return {f(0), f(1), f(2)};
}

/// Short and long saddle points for harmonic order q in each requested
/// half-cycle. Beyond the classical cutoff the pair is tracked by
/// continuation in q and flagged post_cutoff.
inline std::vector<SaddleSolution> solve_saddle_points(double q, const LaserParams& params,
                                                       const SaddleOptions& opt = {}) {
  params.validate();
  qstrong::detail::require(params.envelope != Envelope::gaussian,
                           "solve_saddle_points: flat or sin2 envelope required");
  qstrong::detail::require(params.E0 > 0.0, "solve_saddle_points: E0 must be > 0");
  qstrong::detail::require(std::isfinite(q) && q * params.omega > params.Ip,
                           "solve_saddle_points: need q*omega > Ip");
  const double T0 = params.period();
  const ClassicalModel model(params);
  std::vector<int> halves = opt.halfcycles;
  if (halves.empty()) halves = params.envelope == Envelope::flat ? std::vector<int>{0, 1} : std::vector<int>{-1, 0};

  impl::SaddleSystem sys{analytic::SinusoidSum::from(params), params.Ip, q * params.omega};
  const double K = q * params.omega - params.Ip;

  // solve at return energy Kc starting from the classical trajectory and
  // switching Ip on gradually
  auto from_classical = [&](int k, double Kc, bool long_branch) -> std::optional<Eigen::Vector3cd> {
    const double ti = model.ionization_time(k, Kc, long_branch);
    auto tr = model.trajectory(ti);
    if (!tr) return std::nullopt;
    impl::SaddleSystem cs = sys;
    cs.energy = Kc + params.Ip;
    const double Ei = std::abs(cs.s.field(cplx(ti)));
    Eigen::Vector3cd x(cs.s.a(cplx(ti)), cplx(ti, std::sqrt(2.0 * params.Ip) / Ei), cplx(tr->t_r));
    if (auto direct = impl::newton(cs, x, 0.5 * T0, opt)) return direct;
    double lam = 1e-4;
    x(1) = cplx(ti, std::sqrt(2.0 * lam * params.Ip) / Ei);
    while (true) {
      cs.ip_scale = lam;
      auto sol = impl::newton(cs, x, 0.5 * T0, opt);
      if (!sol) return std::nullopt;
      x = *sol;
      if (lam == 1.0) return x;
      const double next = std::min(1.0, lam * 1.5);
      const cplx Et = cs.s.field(x(1));
      x(1) += I * (std::sqrt(2.0 * next * params.Ip) - std::sqrt(2.0 * lam * params.Ip)) / std::abs(Et);
      lam = next;
    }
  };

  std::vector<SaddleSolution> out;
  for (int k : halves) {
    const double Kmax = model.cutoff(k).energy;
    for (bool long_branch : {false, true}) {
      const Branch b = long_branch ? Branch::long_trajectory : Branch::short_trajectory;
      const double Kstart = std::min(K, 0.9 * Kmax);
      auto x = from_classical(k, std::max(Kstart, 1e-6 * Kmax), long_branch);
      if (!x)
        throw ConvergenceError("saddle solve failed on " + to_string(b) + " branch, half-cycle " +
                               std::to_string(k) + ", q=" + io::fmt(q));
      // march in return energy up to the target
      double Kc = std::max(Kstart, 1e-6 * Kmax);
      double step = 0.02 * Kmax;
      while (Kc < K) {
        const double Kn = std::min(K, Kc + step);
        impl::SaddleSystem cs = sys;
        cs.energy = Kn + params.Ip;
        auto sol = impl::newton(cs, *x, 0.5 * T0, opt);
        if (sol) {
          x = sol;
          Kc = Kn;
          step = std::min(step * 1.5, 0.05 * Kmax);
        } else {
          step *= 0.5;
          if (step < 1e-7 * Kmax)
            throw ConvergenceError("saddle continuation stalled on " + to_string(b) + " branch, half-cycle " +
                                   std::to_string(k) + ", q=" + io::fmt(q));
        }
      }
      SaddleSolution s;
      s.q = q;
      s.p_s = (*x)(0);
      s.t_i = (*x)(1);
      s.t_r = (*x)(2);
      s.branch = b;
      s.halfcycle = k;
      s.post_cutoff = K > Kmax;
      if (!(s.t_i.real() < s.t_r.real()) || s.t_r.real() - s.t_i.real() > T0)
        throw ConvergenceError("saddle solve on " + to_string(b) + " branch, half-cycle " + std::to_string(k) +
                               " left the one-cycle window");
      out.push_back(s);
    }
  }
  return out;
}

inline std::string saddle_csv(const std::vector<SaddleSolution>& sols) {
  std::ostringstream os;
  os << "q,branch,halfcycle,p_re,p_im,ti_re,ti_im,tr_re,tr_im,post_cutoff\n";
  for (const auto& s : sols)
    os << io::fmt(s.q) << ',' << to_string(s.branch) << ',' << s.halfcycle << ',' << io::fmt(s.p_s.real()) << ','
       << io::fmt(s.p_s.imag()) << ',' << io::fmt(s.t_i.real()) << ',' << io::fmt(s.t_i.imag()) << ','
       << io::fmt(s.t_r.real()) << ',' << io::fmt(s.t_r.imag()) << ',' << (s.post_cutoff ? 1 : 0) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// induced dipole

struct DipoleOptions {
  double epsilon = 1e-4;                  // regularizes (eps + i tau/2)^(-3/2)
  double horizon_cycles = 1.0;            // longest excursion kept
  std::size_t tau_points_per_cycle = 2000;
  std::size_t table_points_per_cycle = 1024;
  double charge = -1.0;                   // +-1; the integral as written is the response of a unit positive charge
};

/// d_H(t) on the given uniform grid. The excursion-time integral uses its own
/// fixed grid so the result at a given t does not depend on the output grid.
inline DipoleSeries sfa_dipole_series(const LaserParams& params, std::span<const double> t_grid,
                                      const DipoleOptions& opt = {}) {
  params.validate();
  qstrong::detail::require(t_grid.size() >= 2, "sfa_dipole_series: need at least two time points");
  qstrong::detail::require(num::is_uniform(t_grid), "sfa_dipole_series: time grid must be ascending and uniform");
  const double T0 = params.period();
  const double dt = (t_grid.back() - t_grid.front()) / static_cast<double>(t_grid.size() - 1);
  qstrong::detail::require(dt <= T0 / 200.0 * (1.0 + 1e-9),
                           "sfa_dipole_series: grid under-resolved (need >= 200 points per cycle)");
  qstrong::detail::require(opt.epsilon > 0.0 && opt.horizon_cycles > 0.0 && opt.tau_points_per_cycle >= 16,
                           "sfa_dipole_series: bad integration options");
  qstrong::detail::require(opt.charge == 1.0 || opt.charge == -1.0, "sfa_dipole_series: charge must be +1 or -1");

  DipoleSeries out;
  out.t.assign(t_grid.begin(), t_grid.end());
  out.d.assign(t_grid.size(), 0.0);
  if (params.E0 == 0.0) return out;

  const double horizon = opt.horizon_cycles * T0;
  const FieldTable tab(params, t_grid.front() - horizon, t_grid.back(), opt.table_points_per_cycle);

  std::size_t n = static_cast<std::size_t>(std::ceil(opt.horizon_cycles * static_cast<double>(opt.tau_points_per_cycle)));
  if (n % 2) ++n;
  const double h = horizon / static_cast<double>(n);
  std::vector<cplx> pref(n + 1);
  for (std::size_t j = 1; j <= n; ++j) {
    const double tau = h * static_cast<double>(j);
    const double w = (j == n) ? 1.0 : (j % 2 ? 4.0 : 2.0);
    pref[j] = (w * h / 3.0) * std::pow(pi / (opt.epsilon + 0.5 * I * tau), 1.5);
  }

  const double Ip = params.Ip;
  for (std::size_t k = 0; k < t_grid.size(); ++k) {
    const double t = t_grid[k];
    const double at = tab.a(t), I1t = tab.int_a(t), I2t = tab.int_a2(t);
    cplx acc{};
    for (std::size_t j = 1; j <= n; ++j) {
      const double tau = h * static_cast<double>(j);
      const double s = t - tau;
      const double Es = classical_field(s, params);
      if (Es == 0.0) continue;
      const double ps = (I1t - tab.int_a(s)) / tau;
      const double S = 0.5 * (I2t - tab.int_a2(s) - tau * ps * ps) + Ip * tau;
      const cplx dr = std::conj(bound_continuum_dipole(ps - at, Ip));
      const cplx di = bound_continuum_dipole(ps - tab.a(s), Ip);
      acc += pref[j] * dr * Es * di * std::polar(1.0, -S);
    }
    // odd in the field: flipping the charge flips the dipole
    out.d[k] = opt.charge * 2.0 * std::real(I * acc);
  }
  return out;
}

// ---------------------------------------------------------------------------
// dipole CSV

inline void save_dipole_series(const std::string& path, const DipoleSeries& s) {
  s.validate();
  std::string text = "t_au,d_au\n";
  for (std::size_t i = 0; i < s.t.size(); ++i) text += io::fmt(s.t[i]) + "," + io::fmt(s.d[i]) + "\n";
  io::write_file(path, text);
}

/// Reads a two-column (t, d) file; a non-uniform grid is resampled onto a
/// uniform one with the same number of points by cubic interpolation.
inline DipoleSeries load_dipole_series(const std::string& path) {
  const auto tab = io::read_csv(path, true);
  if (tab.rows.empty()) throw ParseError(path, 1, "empty dipole file");
  DipoleSeries s;
  for (std::size_t r = 0; r < tab.rows.size(); ++r) {
    const auto& row = tab.rows[r];
    if (row.size() != 2) throw ParseError(path, tab.lines[r], "expected 2 columns, got " + std::to_string(row.size()));
    const double t = io::parse_double(row[0], path, tab.lines[r], "time column");
    const double d = io::parse_double(row[1], path, tab.lines[r], "dipole column");
    if (!s.t.empty() && !(t > s.t.back())) throw ParseError(path, tab.lines[r], "time column not strictly ascending");
    s.t.push_back(t);
    s.d.push_back(d);
  }
  if (s.t.size() < 2) throw ParseError(path, tab.lines.back(), "need at least two samples");
  if (!num::is_uniform(s.t)) {
    auto grid = num::linspace(s.t.front(), s.t.back(), s.t.size());
    std::vector<double> tt = s.t, dd = s.d;
    if (tt.size() < 4) throw ParseError(path, tab.lines.back(), "non-uniform grid needs at least 4 samples to resample");
    auto spline = boost::math::interpolators::makima(std::move(tt), std::move(dd));
    for (std::size_t i = 0; i < grid.size(); ++i) s.d[i] = spline(grid[i]);
    s.t = std::move(grid);
  }
  s.validate();
  return s;
}

} // namespace sfa
} // namespace qstrong
