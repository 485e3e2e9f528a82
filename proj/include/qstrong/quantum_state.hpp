#pragma once

// Single-mode quantum optics kernel.
//
// Phase-space convention used everywhere: quadratures x = (a + a^dag)/sqrt2 and
// p = (a - a^dag)/(i sqrt2), vacuum variance 1/2, so |alpha> is centred at
// (sqrt2 Re alpha, sqrt2 Im alpha). Grid values are the parity form
// W(beta) = (2/pi) tr[D(beta) Pi D(beta)^dag rho] with beta = (x + i p)/sqrt2;
// the vacuum peak is 2/pi and the measure is d^2beta = dx dp / 2.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "qstrong/errors.hpp"
#include "qstrong/io.hpp"
#include "qstrong/numerics.hpp"

namespace qstrong {

inline constexpr const char* wigner_convention = "x=(a+a^dag)/sqrt2, vacuum variance 1/2, W=(2/pi)tr(D Pi D^dag rho)";

struct WignerGrid {
  std::vector<double> x_axis;
  std::vector<double> p_axis;
  Eigen::MatrixXd values;  // rows: p, cols: x

  WignerGrid() = default;
  WignerGrid(std::vector<double> x, std::vector<double> p)
      : x_axis(std::move(x)), p_axis(std::move(p)), values(Eigen::MatrixXd::Zero(p_axis.size(), x_axis.size())) {}

  static cplx beta(double x, double p) { return {x / std::sqrt(2.0), p / std::sqrt(2.0)}; }

  double at(std::size_t ip, std::size_t ix) const { return values(static_cast<Eigen::Index>(ip), static_cast<Eigen::Index>(ix)); }

  void validate() const {
    detail::require(!x_axis.empty() && !p_axis.empty(), "wigner grid: empty axis");
    for (std::size_t i = 1; i < x_axis.size(); ++i) detail::require(x_axis[i] > x_axis[i - 1], "wigner grid: x axis not ascending");
    for (std::size_t i = 1; i < p_axis.size(); ++i) detail::require(p_axis[i] > p_axis[i - 1], "wigner grid: p axis not ascending");
    detail::require(values.rows() == static_cast<Eigen::Index>(p_axis.size()) &&
                        values.cols() == static_cast<Eigen::Index>(x_axis.size()),
                    "wigner grid: value matrix shape does not match axes");
    detail::require(values.allFinite(), "wigner grid: non-finite value");
  }

  /// Fills values from f(beta).
  template <class F>
  WignerGrid& fill(F&& f) {
    for (std::size_t i = 0; i < p_axis.size(); ++i)
      for (std::size_t j = 0; j < x_axis.size(); ++j)
        values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f(beta(x_axis[j], p_axis[i]));
    return *this;
  }
};

struct GridAxes {
  double x_min = -5, x_max = 5;
  double p_min = -5, p_max = 5;
  std::size_t nx = 101, np = 101;

  void validate() const {
    detail::require(std::isfinite(x_min) && std::isfinite(x_max) && x_max > x_min, "grid: need x_max > x_min");
    detail::require(std::isfinite(p_min) && std::isfinite(p_max) && p_max > p_min, "grid: need p_max > p_min");
    detail::require(nx >= 2 && np >= 2, "grid: need at least 2 points per axis");
  }
  WignerGrid make() const {
    validate();
    return WignerGrid(num::linspace(x_min, x_max, nx), num::linspace(p_min, p_max, np));
  }
  /// True if the box contains the disc of quadrature radius r around (x, p).
  bool covers(double x, double p, double r) const {
    return x - r >= x_min && x + r <= x_max && p - r >= p_min && p + r <= p_max;
  }
};

/// Requires that the grid box contains every coherent centre with a 4 sigma margin.
inline void require_span(const GridAxes& ax, const std::vector<cplx>& centres, const std::string& who) {
  const double margin = 4.0 * std::sqrt(0.5);
  for (const cplx& a : centres)
    detail::require(ax.covers(std::sqrt(2.0) * a.real(), std::sqrt(2.0) * a.imag(), margin),
                    who + ": grid does not span the state (centre +- 4 sigma)");
}

struct DensityMatrix {
  Eigen::MatrixXcd rho;

  unsigned n_max() const { return static_cast<unsigned>(rho.rows()) - 1; }

  void validate(double tol = 1e-8) const {
    detail::require(rho.rows() >= 1 && rho.rows() == rho.cols(), "density matrix: must be square and nonempty");
    detail::require(rho.allFinite(), "density matrix: non-finite entry");
    detail::require((rho - rho.adjoint()).cwiseAbs().maxCoeff() <= 1e-10, "density matrix: not Hermitian");
    detail::require(std::abs(rho.trace() - cplx(1.0)) <= tol, "density matrix: trace differs from 1");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho, Eigen::EigenvaluesOnly);
    detail::require(es.eigenvalues().minCoeff() >= -tol, "density matrix: negative eigenvalue");
  }

  static DensityMatrix pure(const Eigen::VectorXcd& c) {
    const double n2 = c.squaredNorm();
    detail::require(n2 > 0.0, "density matrix: zero state vector");
    return DensityMatrix{c * c.adjoint() / n2};
  }

  static DensityMatrix fock(unsigned n, unsigned n_max) {
    detail::require(n <= n_max, "density matrix: Fock index beyond cutoff");
    Eigen::MatrixXcd r = Eigen::MatrixXcd::Zero(n_max + 1, n_max + 1);
    r(n, n) = 1.0;
    return DensityMatrix{r};
  }
};

// ---------------------------------------------------------------------------
// coherent states

/// pi^{-1/4} exp[-(x - sqrt2 Re a)^2/2 + i x sqrt2 Im a].
inline cplx coherent_position_amplitude(double x, cplx alpha) {
  const double s2 = std::sqrt(2.0);
  const double u = x - s2 * alpha.real();
  return std::pow(pi, -0.25) * std::exp(cplx(-0.5 * u * u, x * s2 * alpha.imag()));
}

/// <x|alpha> including the phase exp(-i Re a Im a) that the displacement
/// operator attaches; needed whenever coherent states are superposed.
inline cplx coherent_wavefunction(double x, cplx alpha) {
  return coherent_position_amplitude(x, alpha) * std::polar(1.0, -alpha.real() * alpha.imag());
}

/// <alpha|alpha + delta>.
inline cplx coherent_overlap(cplx alpha, cplx beta_shifted) {
  const cplx d = beta_shifted - alpha;
  return std::exp(0.5 * (std::conj(alpha) * d - alpha * std::conj(d)) - 0.5 * std::norm(d));
}

/// Unnormalized superposition sum_k c_k |alpha_k>.
struct CoherentSuperposition {
  std::vector<std::pair<cplx, cplx>> terms;  // (coefficient, amplitude)

  cplx wavefunction(double x) const {
    cplx s{};
    for (const auto& [c, a] : terms) s += c * coherent_wavefunction(x, a);
    return s;
  }

  double norm2() const {
    cplx s{};
    for (const auto& [ci, ai] : terms)
      for (const auto& [cj, aj] : terms) s += std::conj(ci) * cj * coherent_overlap(ai, aj);
    return s.real();
  }

  std::vector<cplx> centres() const {
    std::vector<cplx> v;
    for (const auto& t : terms) v.push_back(t.second);
    return v;
  }
};

/// Fock coefficients c_n = sum_k coeff_k e^{-|a_k|^2/2} a_k^n / sqrt(n!).
inline Eigen::VectorXcd fock_expand_superposition(const std::vector<std::pair<cplx, cplx>>& terms, unsigned n_max,
                                                  double tail_tol = 1e-12) {
  for (const auto& [c, a] : terms) {
    detail::require(std::isfinite(std::abs(c)) && std::isfinite(std::abs(a)), "fock_expand: non-finite term");
    const unsigned need = num::poisson_cutoff(std::norm(a), tail_tol);
    if (need > n_max)
      throw ValidationError("fock_expand: n_max=" + std::to_string(n_max) + " too small, need n_max >= " +
                            std::to_string(need));
  }
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(n_max + 1);
  for (const auto& [c, a] : terms) {
    cplx v = c * std::exp(-0.5 * std::norm(a));
    out(0) += v;
    for (unsigned n = 1; n <= n_max; ++n) {
      v *= a / std::sqrt(static_cast<double>(n));
      out(n) += v;
    }
  }
  return out;
}

inline unsigned required_n_max(const std::vector<cplx>& amplitudes, double tail_tol = 1e-12) {
  unsigned n = 0;
  for (const cplx& a : amplitudes) n = std::max(n, num::poisson_cutoff(std::norm(a), tail_tol));
  return n;
}

inline double mean_photon_number(const Eigen::VectorXcd& c) {
  double num = 0.0, den = 0.0;
  for (Eigen::Index n = 0; n < c.size(); ++n) {
    num += static_cast<double>(n) * std::norm(c(n));
    den += std::norm(c(n));
  }
  detail::require(den > 0.0, "mean_photon_number: zero state");
  return num / den;
}

// ---------------------------------------------------------------------------
// Wigner functions

/// Wigner function of |m><n| (m >= n) at beta:
/// (2/pi)(-1)^n sqrt(n!/m!) (2 beta*)^{m-n} e^{-2|beta|^2} L_n^{(m-n)}(4|beta|^2).
/// Returns all entries for m >= n, indexed [d][n] with d = m - n.
inline std::vector<std::vector<cplx>> fock_wigner_elements(cplx beta, unsigned n_max) {
  const double y = 4.0 * std::norm(beta);
  const cplx b2 = 2.0 * std::conj(beta);
  const double g = (2.0 / pi) * std::exp(-0.5 * y);
  std::vector<std::vector<cplx>> out(n_max + 1);
  cplx pw = 1.0;  // (2 beta*)^d / sqrt(d!) carried along d
  for (unsigned d = 0; d <= n_max; ++d) {
    if (d > 0) pw *= b2 / std::sqrt(static_cast<double>(d));
    const unsigned len = n_max - d + 1;
    out[d].resize(len);
    // L_n^{(d)} by upward recurrence; sqrt(n!/(n+d)!) built incrementally
    double Lm1 = 0.0, L = 1.0;
    double ratio = 1.0;  // sqrt(n! d! / (n+d)!)
    for (unsigned n = 0; n < len; ++n) {
      if (n == 1) {
        Lm1 = 1.0;
        L = 1.0 + d - y;
      } else if (n > 1) {
        const double Ln = ((2.0 * (n - 1) + 1.0 + d - y) * L - (n - 1 + d) * Lm1) / n;
        Lm1 = L;
        L = Ln;
      }
      if (n > 0) ratio *= std::sqrt(static_cast<double>(n) / static_cast<double>(n + d));
      const double sign = (n % 2) ? -1.0 : 1.0;
      out[d][n] = g * sign * ratio * pw * L;
    }
  }
  return out;
}

inline double wigner_value(const DensityMatrix& rho, cplx beta) {
  const unsigned N = rho.n_max();
  const auto el = fock_wigner_elements(beta, N);
  double w = 0.0;
  for (unsigned d = 0; d <= N; ++d)
    for (unsigned n = 0; n + d <= N; ++n) {
      // W = sum_{m,n} rho_{mn} W_{|m><n|}
      const cplx r = rho.rho(n + d, n);
      const double term = std::real(r * el[d][n]);
      w += d == 0 ? term : 2.0 * term;
    }
  return w;
}

inline WignerGrid wigner_from_density_matrix(const DensityMatrix& rho, const std::vector<double>& x_axis,
                                             const std::vector<double>& p_axis, bool allow_coarse = false) {
  rho.validate();
  WignerGrid g(x_axis, p_axis);
  detail::require(x_axis.size() >= 2 && p_axis.size() >= 2, "wigner_from_density_matrix: need at least 2 points per axis");
  if (!allow_coarse) {
    const double dx = (x_axis.back() - x_axis.front()) / static_cast<double>(x_axis.size() - 1);
    const double dp = (p_axis.back() - p_axis.front()) / static_cast<double>(p_axis.size() - 1);
    detail::require(dx <= 0.125 + 1e-12 && dp <= 0.125 + 1e-12,
                    "wigner_from_density_matrix: grid too coarse (fewer than 8 points per unit quadrature)");
  }
  g.fill([&](cplx b) { return wigner_value(rho, b); });
  g.validate();
  return g;
}

inline WignerGrid wigner_from_density_matrix(const DensityMatrix& rho, const GridAxes& ax, bool allow_coarse = false) {
  ax.validate();
  return wigner_from_density_matrix(rho, num::linspace(ax.x_min, ax.x_max, ax.nx),
                                    num::linspace(ax.p_min, ax.p_max, ax.np), allow_coarse);
}

namespace detail {
inline std::vector<double> trapezoid_weights(const std::vector<double>& ax) {
  std::vector<double> w(ax.size(), 0.0);
  for (std::size_t i = 0; i + 1 < ax.size(); ++i) {
    const double h = 0.5 * (ax[i + 1] - ax[i]);
    w[i] += h;
    w[i + 1] += h;
  }
  return w;
}
} // namespace detail

/// Trapezoidal integral of f(beta) W(beta) d^2beta over the grid.
template <class F>
double integrate_wigner_weighted(const WignerGrid& g, F&& f) {
  const auto wx = detail::trapezoid_weights(g.x_axis), wp = detail::trapezoid_weights(g.p_axis);
  double s = 0.0;
  for (std::size_t i = 0; i < g.p_axis.size(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < g.x_axis.size(); ++j) row += wx[j] * g.at(i, j) * f(WignerGrid::beta(g.x_axis[j], g.p_axis[i]));
    s += wp[i] * row;
  }
  return 0.5 * s;
}

inline double integrate_wigner(const WignerGrid& g) {
  return integrate_wigner_weighted(g, [](cplx) { return 1.0; });
}

/// <a^dag a> from the symmetric moment: int W |beta|^2 d^2beta - 1/2.
inline double wigner_mean_photon(const WignerGrid& g) {
  return integrate_wigner_weighted(g, [](cplx b) { return std::norm(b); }) / integrate_wigner(g) - 0.5;
}

/// Volume of the negative part, int |min(W,0)| d^2beta.
inline double negativity_volume(const WignerGrid& g) {
  WignerGrid neg = g;
  neg.values = g.values.cwiseMin(0.0).cwiseAbs();
  return integrate_wigner(neg);
}

// ---------------------------------------------------------------------------
// serialization

inline std::string wigner_csv(const WignerGrid& g) {
  std::ostringstream os;
  os << "# convention=" << wigner_convention << "\n";
  os << "p\\x";
  for (double x : g.x_axis) os << ',' << io::fmt(x);
  os << '\n';
  for (std::size_t i = 0; i < g.p_axis.size(); ++i) {
    os << io::fmt(g.p_axis[i]);
    for (std::size_t j = 0; j < g.x_axis.size(); ++j) os << ',' << io::fmt(g.at(i, j));
    os << '\n';
  }
  return os.str();
}

inline void save_wigner(const std::string& path, const WignerGrid& g) { io::write_file(path, wigner_csv(g)); }

inline WignerGrid load_wigner(const std::string& path) {
  const auto t = io::read_csv(path, true);
  if (t.header.size() < 2) throw ParseError(path, 1, "missing x-axis header row");
  std::vector<double> xs;
  for (std::size_t j = 1; j < t.header.size(); ++j) xs.push_back(io::parse_double(t.header[j], path, 1, "x axis"));
  std::vector<double> ps;
  std::vector<std::vector<double>> rows;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (t.rows[r].size() != xs.size() + 1)
      throw ParseError(path, t.lines[r], "row has " + std::to_string(t.rows[r].size()) + " fields, expected " +
                                             std::to_string(xs.size() + 1));
    ps.push_back(io::parse_double(t.rows[r][0], path, t.lines[r], "p axis"));
    std::vector<double> v;
    for (std::size_t j = 1; j < t.rows[r].size(); ++j) v.push_back(io::parse_double(t.rows[r][j], path, t.lines[r], "value"));
    rows.push_back(std::move(v));
  }
  if (ps.empty()) throw ParseError(path, 1, "no data rows");
  WignerGrid g(xs, ps);
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (std::size_t j = 0; j < xs.size(); ++j) g.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  g.validate();
  return g;
}

inline std::string density_matrix_csv(const DensityMatrix& r) {
  std::ostringstream os;
  os << "n,m,re,im\n";
  for (Eigen::Index n = 0; n < r.rho.rows(); ++n)
    for (Eigen::Index m = 0; m < r.rho.cols(); ++m)
      os << n << ',' << m << ',' << io::fmt(r.rho(n, m).real()) << ',' << io::fmt(r.rho(n, m).imag()) << '\n';
  return os.str();
}

inline DensityMatrix load_density_matrix(const std::string& path) {
  const auto t = io::read_csv(path, true);
  std::vector<std::tuple<long, long, cplx>> entries;
  long nmax = -1;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (row.size() != 4) throw ParseError(path, t.lines[r], "expected 4 columns n,m,re,im");
    const double n = io::parse_double(row[0], path, t.lines[r], "n"), m = io::parse_double(row[1], path, t.lines[r], "m");
    if (n < 0 || m < 0 || n != std::floor(n) || m != std::floor(m)) throw ParseError(path, t.lines[r], "bad Fock index");
    entries.emplace_back(static_cast<long>(n), static_cast<long>(m),
                         cplx(io::parse_double(row[2], path, t.lines[r], "re"), io::parse_double(row[3], path, t.lines[r], "im")));
    nmax = std::max({nmax, static_cast<long>(n), static_cast<long>(m)});
  }
  if (nmax < 0) throw ParseError(path, 1, "no entries");
  DensityMatrix d{Eigen::MatrixXcd::Zero(nmax + 1, nmax + 1)};
  for (const auto& [n, m, v] : entries) d.rho(n, m) = v;
  d.validate();
  return d;
}

} // namespace qstrong
