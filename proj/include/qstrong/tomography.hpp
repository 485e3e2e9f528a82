#pragma once

// Homodyne tomography: quadrature statistics of a state, simulated homodyne
// records, filtered back-projection of the Wigner function and a
// maximum-likelihood density-matrix estimate.

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qstrong/errors.hpp"
#include "qstrong/hhg.hpp"
#include "qstrong/io.hpp"
#include "qstrong/numerics.hpp"
#include "qstrong/quantum_state.hpp"

namespace qstrong::tomo {

inline constexpr double default_kc = 4.7;

struct QuadratureDataset {
  std::vector<double> phi;
  std::vector<double> x;
  double vacuum_scale = 1.0;
  std::optional<std::uint64_t> seed;

  std::size_t size() const { return x.size(); }

  void validate() const {
    using detail::require;
    require(phi.size() == x.size(), "dataset: phi and x columns differ in length");
    require(vacuum_scale > 0.0 && std::isfinite(vacuum_scale), "dataset: vacuum_scale must be > 0");
    for (std::size_t i = 0; i < x.size(); ++i) {
      require(std::isfinite(x[i]) && std::isfinite(phi[i]), "dataset: non-finite sample");
      require(phi[i] >= 0.0 && phi[i] < pi, "dataset: phases must lie in [0, pi)");
    }
  }

  /// Distinct phases with their sample counts.
  std::map<double, std::size_t> phase_counts() const {
    std::map<double, std::size_t> m;
    for (double p : phi) ++m[p];
    return m;
  }

  void append(const QuadratureDataset& o) {
    detail::require(o.vacuum_scale == vacuum_scale, "dataset: cannot merge datasets with different calibration");
    phi.insert(phi.end(), o.phi.begin(), o.phi.end());
    x.insert(x.end(), o.x.begin(), o.x.end());
  }
};

// ---------------------------------------------------------------------------
// quadrature distributions  P_phi(x) = <x_phi|rho|x_phi>

inline double quadrature_distribution(const CoherentSuperposition& s, double phi, double x) {
  const cplx rot = std::polar(1.0, -phi);
  cplx amp{};
  for (const auto& [c, a] : s.terms) amp += c * coherent_wavefunction(x, a * rot);
  return std::norm(amp) / s.norm2();
}

inline double quadrature_distribution(const hhg::CatStateParams& cat, double phi, double x) {
  return quadrature_distribution(cat.superposition(), phi, x);
}

inline double quadrature_distribution(const DensityMatrix& rho, double phi, double x) {
  const unsigned N = rho.n_max();
  const auto h = num::hermite_functions(x, N);
  Eigen::VectorXcd v(N + 1);
  for (unsigned n = 0; n <= N; ++n) v(n) = std::polar(h[n], static_cast<double>(n) * phi);  // <n|x_phi>
  return std::max(0.0, std::real(v.dot(rho.rho * v)));
}

namespace impl {

inline double reach(const CoherentSuperposition& s) {
  double r = 0.0;
  for (const auto& t : s.terms) r = std::max(r, std::sqrt(2.0) * std::abs(t.second));
  return r + 9.0;
}
inline double reach(const hhg::CatStateParams& c) { return reach(c.superposition()); }
inline double reach(const DensityMatrix& rho) { return std::sqrt(2.0 * rho.n_max() + 1.0) + 7.0; }

} // namespace impl

/// Draws shots_per_phase samples at each phase by inverse-CDF sampling of a
/// finely tabulated P_phi. Phase k uses the RNG stream (seed, k).
template <class State>
QuadratureDataset sample_homodyne(const State& state, const std::vector<double>& phases, std::size_t shots_per_phase,
                                  std::uint64_t seed, std::size_t table_points = 8001) {
  detail::require(shots_per_phase >= 1, "sample_homodyne: shots_per_phase must be >= 1");
  detail::require(!phases.empty(), "sample_homodyne: no phases");
  const double R = impl::reach(state);
  const auto xs = num::linspace(-R, R, table_points);
  QuadratureDataset d;
  d.seed = seed;
  d.phi.reserve(phases.size() * shots_per_phase);
  d.x.reserve(phases.size() * shots_per_phase);
  std::vector<double> cdf(xs.size());
  for (std::size_t k = 0; k < phases.size(); ++k) {
    const double phi = phases[k];
    detail::require(phi >= 0.0 && phi < pi, "sample_homodyne: phases must lie in [0, pi)");
    std::vector<double> pdf(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) pdf[i] = quadrature_distribution(state, phi, xs[i]);
    cdf = num::cumulative_trapezoid<double>(pdf, xs[1] - xs[0]);
    const double total = cdf.back();
    detail::require(total > 0.0, "sample_homodyne: quadrature distribution vanishes");
    num::Rng rng(seed, k);
    for (std::size_t s = 0; s < shots_per_phase; ++s) {
      const double u = rng.uniform() * total;
      auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
      std::size_t j = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(it - cdf.begin(), 1, static_cast<std::ptrdiff_t>(cdf.size()) - 1));
      const double c0 = cdf[j - 1], c1 = cdf[j];
      const double f = c1 > c0 ? (u - c0) / (c1 - c0) : 0.5;
      d.phi.push_back(phi);
      d.x.push_back(xs[j - 1] + f * (xs[j] - xs[j - 1]));
    }
  }
  return d;
}

/// n equally spaced phases k pi / n in [0, pi).
inline std::vector<double> phase_grid(std::size_t n) {
  detail::require(n >= 1, "phase_grid: need at least one phase");
  std::vector<double> v(n);
  for (std::size_t k = 0; k < n; ++k) v[k] = pi * static_cast<double>(k) / static_cast<double>(n);
  return v;
}

/// Rescales the quadratures so that the vacuum record has variance 1/2.
inline QuadratureDataset scale_to_vacuum(const QuadratureDataset& data, const QuadratureDataset& vacuum) {
  detail::require(vacuum.size() >= 2, "scale_to_vacuum: vacuum dataset needs at least 2 samples");
  double mean = 0.0;
  for (double v : vacuum.x) mean += v;
  mean /= static_cast<double>(vacuum.size());
  double var = 0.0;
  for (double v : vacuum.x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(vacuum.size() - 1);
  detail::require(var > 0.0 && std::isfinite(var), "scale_to_vacuum: vacuum dataset has zero variance");
  const double s = std::sqrt(0.5 / var);
  QuadratureDataset out = data;
  for (double& v : out.x) v *= s;
  out.vacuum_scale = data.vacuum_scale * s;
  return out;
}

// ---------------------------------------------------------------------------
// filtered back-projection

/// K(z) = int_0^{k_c} xi cos(xi z) d xi = (cos(k_c z) + k_c z sin(k_c z) - 1) / z^2.
inline double fbp_kernel(double z, double kc) {
  detail::require(kc > 0.0 && std::isfinite(kc), "fbp_kernel: k_c must be > 0");
  if (std::abs(z) < 1e-4) {
    const double k2 = kc * kc, z2 = z * z;
    return 0.5 * k2 - k2 * k2 * z2 / 8.0 + k2 * k2 * k2 * z2 * z2 / 144.0;
  }
  const double u = kc * z;
  return (std::cos(u) + u * std::sin(u) - 1.0) / (z * z);
}

/// dK/dz.
inline double fbp_kernel_derivative(double z, double kc) {
  const double u = kc * z;
  if (std::abs(u) < 0.05) {
    // sum_n (-1)^n (2n) z^{2n-1} k^{2n+2} / ((2n)! (2n+2))
    const double k2 = kc * kc, z2 = z * z;
    return kc * kc * kc * kc * z * (-0.25 + k2 * z2 / 36.0 - k2 * k2 * z2 * z2 / 960.0 + k2 * k2 * k2 * z2 * z2 * z2 / 50400.0);
  }
  const double n = std::cos(u) + u * std::sin(u) - 1.0;
  return (u * u * std::cos(u) - 2.0 * n) / (z * z * z);
}

/// W(x, p) = 2 (1/(2 pi N)) sum_k K(x cos phi_k + p sin phi_k - x_k), in grid
/// (parity) units. Each phase's kernel sum is tabulated on a fine line grid
/// and interpolated with exact-derivative cubic Hermite polynomials.
///
/// The tabulation uses K(z) = int_0^kc xi cos(xi z) d xi, so a phase's sum is
/// int_0^kc xi Re[e^{i xi s} c(xi)] with c(xi) = sum_k e^{-i xi x_k}; c is
/// evaluated once per Gauss node instead of once per line point. Panels are
/// sized so the rule is exact to rounding for the largest |s - x_k|.
inline WignerGrid reconstruct_wigner_fbp(const QuadratureDataset& data, double kc, const GridAxes& ax,
                                         double line_step = 0.01) {
  data.validate();
  ax.validate();
  detail::require(kc > 0.0 && std::isfinite(kc), "reconstruct_wigner_fbp: k_c must be > 0");
  const auto counts = data.phase_counts();
  detail::require(counts.size() >= 8, "reconstruct_wigner_fbp: need at least 8 distinct phases, got " +
                                          std::to_string(counts.size()));
  std::map<double, std::vector<double>> by_phase;
  for (std::size_t i = 0; i < data.size(); ++i) by_phase[data.phi[i]].push_back(data.x[i]);

  WignerGrid g = ax.make();
  const double rmax = std::hypot(std::max(std::abs(ax.x_min), std::abs(ax.x_max)), std::max(std::abs(ax.p_min), std::abs(ax.p_max)));
  const std::size_t nl = static_cast<std::size_t>(std::ceil(2.0 * rmax / line_step)) + 2;
  const double s0 = -rmax - line_step;
  std::vector<double> F(nl), dF(nl);
  const double norm = 2.0 / (2.0 * pi * static_cast<double>(data.size()));
  double xmax = 0.0;
  for (double v : data.x) xmax = std::max(xmax, std::abs(v));
  const double zmax = -s0 + xmax;
  using GL = boost::math::quadrature::gauss<double, 20>;
  const std::size_t panels = static_cast<std::size_t>(std::ceil(kc * zmax / 8.0)) + 1;
  std::vector<double> xi, wt;
  for (std::size_t m = 0; m < panels; ++m) {
    const double half = 0.5 * kc / static_cast<double>(panels), mid = (2.0 * static_cast<double>(m) + 1.0) * half;
    for (std::size_t i = 0; i < GL::abscissa().size(); ++i)
      for (double sgn : {-1.0, 1.0}) {
        xi.push_back(mid + sgn * half * GL::abscissa()[i]);
        wt.push_back(half * GL::weights()[i]);
      }
  }
  std::vector<cplx> cf(xi.size());
  for (const auto& [phi, xs] : by_phase) {
    for (std::size_t j = 0; j < xi.size(); ++j) {
      cplx acc{};
      for (double xk : xs) acc += std::polar(1.0, -xi[j] * xk);
      cf[j] = wt[j] * xi[j] * acc;
    }
    for (std::size_t i = 0; i < nl; ++i) {
      const double s = s0 + line_step * static_cast<double>(i);
      double f = 0.0, df = 0.0;
      for (std::size_t j = 0; j < xi.size(); ++j) {
        const cplx v = std::polar(1.0, xi[j] * s) * cf[j];
        f += v.real();
        df -= xi[j] * v.imag();
      }
      F[i] = f;
      dF[i] = df;
    }
    const double c = std::cos(phi), sn = std::sin(phi);
    for (std::size_t ip = 0; ip < g.p_axis.size(); ++ip)
      for (std::size_t ix = 0; ix < g.x_axis.size(); ++ix) {
        const double s = g.x_axis[ix] * c + g.p_axis[ip] * sn;
        const double u = (s - s0) / line_step;
        const std::size_t i = std::min(static_cast<std::size_t>(u), nl - 2);
        const double t = u - static_cast<double>(i), t2 = t * t, t3 = t2 * t;
        const double v = (2 * t3 - 3 * t2 + 1) * F[i] + (t3 - 2 * t2 + t) * line_step * dF[i] +
                         (-2 * t3 + 3 * t2) * F[i + 1] + (t3 - t2) * line_step * dF[i + 1];
        g.values(static_cast<Eigen::Index>(ip), static_cast<Eigen::Index>(ix)) += norm * v;
      }
  }
  return g;
}

// ---------------------------------------------------------------------------
// maximum-likelihood density matrix

/// Carries the last iterate when the likelihood has not settled.
class MleConvergenceError : public ConvergenceError {
public:
  MleConvergenceError(const std::string& what, DensityMatrix last) : ConvergenceError(what), last_(std::move(last)) {}
  const DensityMatrix& last_iterate() const noexcept { return last_; }

private:
  DensityMatrix last_;
};

struct MleOptions {
  double tolerance = 1e-8;  // on the change of the mean log-likelihood per iteration
  double bin_width = 0.02;  // samples are grouped per phase into bins of this width
  double dilution = 1.0;    // initial step of rho -> (1 + e R) rho (1 + e R)
};

struct MleResult {
  DensityMatrix rho;
  std::vector<double> log_likelihood;  // per iteration, mean over samples
  unsigned iterations = 0;
};

/// Diluted R rho R iteration. The dilution is halved whenever a full step
/// would lower the likelihood, so the recorded sequence never decreases.
inline MleResult reconstruct_density_matrix(const QuadratureDataset& data, unsigned n_max, unsigned max_iterations,
                                            const MleOptions& opt = {}) {
  data.validate();
  detail::require(data.size() >= 1, "reconstruct_density_matrix: empty dataset");
  detail::require(n_max >= 1 && n_max <= 150, "reconstruct_density_matrix: n_max must be in [1, 150]");
  detail::require(max_iterations >= 1, "reconstruct_density_matrix: max_iterations must be >= 1");
  detail::require(opt.bin_width > 0.0 && opt.tolerance > 0.0 && opt.dilution > 0.0, "reconstruct_density_matrix: bad options");

  // group samples into (phase, bin) projectors
  std::map<std::pair<double, long>, std::size_t> bins;
  for (std::size_t i = 0; i < data.size(); ++i) ++bins[{data.phi[i], std::lround(data.x[i] / opt.bin_width)}];
  const Eigen::Index D = n_max + 1, M = static_cast<Eigen::Index>(bins.size());
  Eigen::MatrixXcd V(D, M);
  Eigen::VectorXd f(M);
  Eigen::Index col = 0;
  for (const auto& [key, cnt] : bins) {
    const double x = static_cast<double>(key.second) * opt.bin_width;
    const auto h = num::hermite_functions(x, n_max);
    for (Eigen::Index n = 0; n < D; ++n) V(n, col) = std::polar(h[n], static_cast<double>(n) * key.first);
    f(col) = static_cast<double>(cnt) / static_cast<double>(data.size());
    ++col;
  }

  auto probabilities = [&](const Eigen::MatrixXcd& rho) {
    const Eigen::MatrixXcd RV = rho * V;
    Eigen::VectorXd p(M);
    for (Eigen::Index j = 0; j < M; ++j) p(j) = std::max(std::real(V.col(j).dot(RV.col(j))), 1e-300);
    return p;
  };
  auto loglik = [&](const Eigen::VectorXd& p) {
    double L = 0.0;
    for (Eigen::Index j = 0; j < M; ++j) L += f(j) * std::log(p(j));
    return L;
  };

  Eigen::MatrixXcd rho = Eigen::MatrixXcd::Identity(D, D) / static_cast<double>(D);
  Eigen::VectorXd p = probabilities(rho);
  double L = loglik(p);
  MleResult res;
  res.log_likelihood.push_back(L);
  double eps = opt.dilution;
  for (unsigned it = 1; it <= max_iterations; ++it) {
    Eigen::MatrixXcd R = V * (f.array() / p.array()).matrix().asDiagonal() * V.adjoint();
    R /= std::real(R.trace()) / static_cast<double>(D);  // R -> identity at the fixed point
    Eigen::MatrixXcd next;
    Eigen::VectorXd pn;
    double Ln = L;
    for (int tries = 0; tries < 40; ++tries) {
      const Eigen::MatrixXcd G = Eigen::MatrixXcd::Identity(D, D) + eps * R;
      next = G * rho * G.adjoint();
      next = 0.5 * (next + next.adjoint()).eval();
      next /= std::real(next.trace());
      pn = probabilities(next);
      Ln = loglik(pn);
      if (Ln >= L) break;
      eps *= 0.5;
    }
    if (Ln < L) {
      // no ascent direction left at machine precision
      next = rho;
      pn = p;
      Ln = L;
    }
    const double change = Ln - L;
    rho = next;
    p = pn;
    L = Ln;
    res.log_likelihood.push_back(L);
    res.iterations = it;
    if (change < opt.tolerance) {
      res.rho = DensityMatrix{rho};
      return res;
    }
    eps = std::min(opt.dilution, 2.0 * eps);
  }
  throw MleConvergenceError("reconstruct_density_matrix: log-likelihood still changing by more than " +
                                io::fmt(opt.tolerance) + " after " + std::to_string(max_iterations) + " iterations",
                            DensityMatrix{rho});
}

inline double mean_photon_from_rho(const DensityMatrix& rho) {
  rho.validate(1e-6);
  double s = 0.0;
  for (Eigen::Index n = 0; n < rho.rho.rows(); ++n) s += static_cast<double>(n) * std::real(rho.rho(n, n));
  return s;
}

// ---------------------------------------------------------------------------
// error metrics and I/O

struct WignerError {
  double max_abs;
  double rmse;
};

inline WignerError wigner_error_estimate(const WignerGrid& reconstructed, const WignerGrid& reference) {
  reconstructed.validate();
  reference.validate();
  auto same = [](const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (std::abs(a[i] - b[i]) > 1e-12 * std::max(1.0, std::abs(b[i]))) return false;
    return true;
  };
  detail::require(same(reconstructed.x_axis, reference.x_axis) && same(reconstructed.p_axis, reference.p_axis),
                  "wigner_error_estimate: grids have different axes");
  const Eigen::ArrayXXd diff = (reconstructed.values - reference.values).array();
  return {diff.abs().maxCoeff(), std::sqrt(diff.square().mean())};
}

inline std::string dataset_csv(const QuadratureDataset& d) {
  std::ostringstream os;
  os << "# vacuum_scale=" << io::fmt(d.vacuum_scale) << "\n";
  if (d.seed) os << "# seed=" << *d.seed << "\n";
  os << "phi_rad,x\n";
  for (std::size_t i = 0; i < d.size(); ++i) os << io::fmt(d.phi[i]) << "," << io::fmt(d.x[i]) << "\n";
  return os.str();
}

inline void save_dataset(const std::string& path, const QuadratureDataset& d) { io::write_file(path, dataset_csv(d)); }

inline QuadratureDataset load_dataset(const std::string& path) {
  const auto t = io::read_csv(path);
  if (t.header.empty() || t.column("phi_rad") != 0 || t.column("x") != 1 || t.header.size() != 2)
    throw ParseError(path, 1, "expected header 'phi_rad,x'");
  QuadratureDataset d;
  if (auto it = t.meta.find("vacuum_scale"); it != t.meta.end()) d.vacuum_scale = io::parse_double(it->second, path, 1, "vacuum_scale");
  if (auto it = t.meta.find("seed"); it != t.meta.end()) {
    std::uint64_t s = 0;
    auto [ptr, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), s);
    if (ec != std::errc{} || ptr != it->second.data() + it->second.size()) throw ParseError(path, 1, "bad seed");
    d.seed = s;
  }
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (row.size() != 2) throw ParseError(path, t.lines[r], "expected 2 fields");
    const double phi = io::parse_double(row[0], path, t.lines[r], "phi_rad");
    if (!(phi >= 0.0 && phi < pi)) throw ParseError(path, t.lines[r], "phase outside [0, pi)");
    d.phi.push_back(phi);
    d.x.push_back(io::parse_double(row[1], path, t.lines[r], "x"));
  }
  if (!(d.vacuum_scale > 0.0)) throw ParseError(path, 1, "vacuum_scale must be > 0");
  return d;
}

} // namespace qstrong::tomo
