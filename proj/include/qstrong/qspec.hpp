#pragma once

// Shot-by-shot conditioning on harmonic emission: shot records, energy
// normalization, selection along the IR / harmonic anti-correlation diagonal,
// the photon-absorption histogram with its Gaussian-comb fit and background
// subtraction, and a labeled synthetic shot generator.

#include <Eigen/Dense>
#include <unsupported/Eigen/NonLinearOptimization>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qstrong/errors.hpp"
#include "qstrong/io.hpp"
#include "qstrong/numerics.hpp"

namespace qstrong::qs {

struct ShotRecord {
  std::size_t id = 0;
  double i_hh = 0.0;
  double i_out = 0.0;
  std::optional<double> i_0;
  std::optional<double> phi;
  std::optional<double> i_phi;

  void validate() const {
    detail::require(std::isfinite(i_hh) && std::isfinite(i_out), "shot " + std::to_string(id) + ": non-finite signal");
    if (i_0) detail::require(std::isfinite(*i_0) && *i_0 > 0.0, "shot " + std::to_string(id) + ": i_0 must be > 0");
    if (phi) detail::require(std::isfinite(*phi), "shot " + std::to_string(id) + ": non-finite phi");
    if (i_phi) detail::require(std::isfinite(*i_phi), "shot " + std::to_string(id) + ": non-finite i_phi");
  }
};

struct SelectionBand {
  double slope = -1.0;
  double intercept = 0.0;
  double half_width = 1.0;  // in i_hh units (vertical residual)

  void validate() const {
    detail::require(std::isfinite(slope) && slope < 0.0, "selection band: slope must be negative (anti-correlation)");
    detail::require(std::isfinite(intercept), "selection band: non-finite intercept");
    detail::require(std::isfinite(half_width) && half_width > 0.0, "selection band: half_width must be > 0");
  }

  double residual(const ShotRecord& s) const { return s.i_hh - (slope * s.i_out + intercept); }
};

// ---------------------------------------------------------------------------
// I/O

inline std::string shots_csv(const std::vector<ShotRecord>& shots) {
  const bool has_i0 = std::all_of(shots.begin(), shots.end(), [](const ShotRecord& s) { return s.i_0.has_value(); });
  const bool has_phase = std::all_of(shots.begin(), shots.end(), [](const ShotRecord& s) { return s.phi && s.i_phi; });
  std::ostringstream os;
  os << "id,i_hh,i_out";
  if (has_i0) os << ",i_0";
  if (has_phase) os << ",phi,i_phi";
  os << "\n";
  for (const auto& s : shots) {
    os << s.id << "," << io::fmt(s.i_hh) << "," << io::fmt(s.i_out);
    if (has_i0) os << "," << io::fmt(*s.i_0);
    if (has_phase) os << "," << io::fmt(*s.phi) << "," << io::fmt(*s.i_phi);
    os << "\n";
  }
  return os.str();
}

inline void save_shots(const std::string& path, const std::vector<ShotRecord>& shots) {
  io::write_file(path, shots_csv(shots));
}

inline std::vector<ShotRecord> load_shots(const std::string& path) {
  const auto t = io::read_csv(path);
  if (t.header.empty()) throw ParseError(path, 1, "missing header (expected id,i_hh,i_out[,i_0][,phi,i_phi])");
  const int c_id = t.column("id"), c_hh = t.column("i_hh"), c_out = t.column("i_out");
  const int c_0 = t.column("i_0"), c_phi = t.column("phi"), c_iphi = t.column("i_phi");
  if (c_id < 0 || c_hh < 0 || c_out < 0) throw ParseError(path, 1, "header must contain id, i_hh and i_out");
  if ((c_phi < 0) != (c_iphi < 0)) throw ParseError(path, 1, "phi and i_phi must appear together");
  for (const auto& h : t.header)
    if (h != "id" && h != "i_hh" && h != "i_out" && h != "i_0" && h != "phi" && h != "i_phi")
      throw ParseError(path, 1, "unknown column '" + h + "'");
  std::vector<ShotRecord> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::size_t ln = t.lines[r];
    if (row.size() != t.header.size())
      throw ParseError(path, ln, "expected " + std::to_string(t.header.size()) + " fields, got " + std::to_string(row.size()));
    ShotRecord s;
    const double id = io::parse_double(row[c_id], path, ln, "id");
    if (id < 0 || id != std::floor(id)) throw ParseError(path, ln, "id must be a non-negative integer");
    s.id = static_cast<std::size_t>(id);
    s.i_hh = io::parse_double(row[c_hh], path, ln, "i_hh");
    s.i_out = io::parse_double(row[c_out], path, ln, "i_out");
    if (c_0 >= 0) {
      s.i_0 = io::parse_double(row[c_0], path, ln, "i_0");
      if (!(*s.i_0 > 0.0)) throw ParseError(path, ln, "i_0 must be > 0");
    }
    if (c_phi >= 0) {
      s.phi = io::parse_double(row[c_phi], path, ln, "phi");
      s.i_phi = io::parse_double(row[c_iphi], path, ln, "i_phi");
    }
    out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// normalization and selection

inline double median(std::vector<double> v) {
  detail::require(!v.empty(), "median of empty set");
  const std::size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end());
  double hi = v[m];
  if (v.size() % 2) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m)));
}

/// Divides i_hh and i_out by i_0 / median(i_0).
inline std::vector<ShotRecord> energy_normalize(const std::vector<ShotRecord>& shots) {
  detail::require(!shots.empty(), "energy_normalize: no shots");
  std::vector<double> i0;
  for (const auto& s : shots) {
    detail::require(s.i_0.has_value(), "energy_normalize: shot " + std::to_string(s.id) + " has no i_0");
    detail::require(*s.i_0 > 0.0, "energy_normalize: shot " + std::to_string(s.id) + " has i_0 <= 0");
    i0.push_back(*s.i_0);
  }
  const double m = median(i0);
  std::vector<ShotRecord> out = shots;
  for (auto& s : out) {
    const double f = *s.i_0 / m;
    s.i_hh /= f;
    s.i_out /= f;
  }
  return out;
}

/// Keeps shots whose i_0 lies within `rel_window` of the median (energy-stability gate).
inline std::vector<ShotRecord> energy_gate(const std::vector<ShotRecord>& shots, double rel_window) {
  detail::require(rel_window > 0.0, "energy_gate: window must be > 0");
  std::vector<double> i0;
  for (const auto& s : shots) {
    detail::require(s.i_0.has_value(), "energy_gate: shot " + std::to_string(s.id) + " has no i_0");
    i0.push_back(*s.i_0);
  }
  const double m = median(i0);
  std::vector<ShotRecord> out;
  for (const auto& s : shots)
    if (std::abs(*s.i_0 / m - 1.0) <= rel_window) out.push_back(s);
  return out;
}

namespace impl {

struct Line {
  double slope, intercept;
};

// principal axis of (i_out, i_hh) after scaling each by sx, sy
inline Line tls_line(const std::vector<ShotRecord>& shots, const std::vector<std::size_t>& idx, double sx, double sy) {
  double mx = 0.0, my = 0.0;
  for (auto i : idx) {
    mx += shots[i].i_out / sx;
    my += shots[i].i_hh / sy;
  }
  mx /= static_cast<double>(idx.size());
  my /= static_cast<double>(idx.size());
  Eigen::Matrix2d C = Eigen::Matrix2d::Zero();
  for (auto i : idx) {
    const Eigen::Vector2d d(shots[i].i_out / sx - mx, shots[i].i_hh / sy - my);
    C += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(C);
  const Eigen::Vector2d dir = es.eigenvectors().col(1);
  const double slope_scaled = dir(1) / dir(0);
  const double slope = slope_scaled * sy / sx;
  return {slope, my * sy - slope * mx * sx};
}

inline double mad_sigma(std::vector<double> r) {
  const double m = median(r);
  for (double& v : r) v = std::abs(v - m);
  return 1.4826 * median(r);
}

} // namespace impl

/// Robust total-least-squares line through the (i_out, i_hh) cloud: both axes
/// are scaled by their robust spread, then the principal axis is refitted on
/// the shots within 2.5 robust sigma until the inlier set is stable.
/// half_width = half_width_sigmas x robust residual sigma of the inliers.
inline SelectionBand fit_anticorrelation_band(const std::vector<ShotRecord>& shots, double half_width_sigmas = 1.0) {
  detail::require(shots.size() >= 100, "fit_anticorrelation_band: need at least 100 shots, got " + std::to_string(shots.size()));
  detail::require(half_width_sigmas > 0.0 && std::isfinite(half_width_sigmas), "fit_anticorrelation_band: half_width_sigmas must be > 0");
  for (const auto& s : shots) s.validate();
  std::vector<double> xo, yh;
  for (const auto& s : shots) {
    xo.push_back(s.i_out);
    yh.push_back(s.i_hh);
  }
  // Pearson correlation of the whole cloud must be significantly negative
  const double n = static_cast<double>(shots.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xo.size(); ++i) {
    mx += xo[i];
    my += yh[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < xo.size(); ++i) {
    sxx += (xo[i] - mx) * (xo[i] - mx);
    syy += (yh[i] - my) * (yh[i] - my);
    sxy += (xo[i] - mx) * (yh[i] - my);
  }
  detail::require(sxx > 0.0 && syy > 0.0, "fit_anticorrelation_band: degenerate cloud (zero spread)");
  const double r = sxy / std::sqrt(sxx * syy);
  const double tstat = r * std::sqrt((n - 2.0) / std::max(1e-300, 1.0 - r * r));
  if (!(tstat < -3.0))
    throw ValidationError("fit_anticorrelation_band: no anti-correlation between i_out and i_hh (r=" + io::fmt(r) + ")");

  const double sx = std::max(impl::mad_sigma(xo), 1e-12 * (1.0 + std::abs(mx)));
  const double sy = std::max(impl::mad_sigma(yh), 1e-12 * (1.0 + std::abs(my)));
  std::vector<std::size_t> idx(shots.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  impl::Line line = impl::tls_line(shots, idx, sx, sy);
  double sigma = 0.0;
  for (int it = 0; it < 100; ++it) {
    std::vector<double> res;
    for (auto i : idx) res.push_back(shots[i].i_hh - (line.slope * shots[i].i_out + line.intercept));
    sigma = impl::mad_sigma(res);
    std::vector<std::size_t> next;
    for (std::size_t i = 0; i < shots.size(); ++i)
      if (std::abs(shots[i].i_hh - (line.slope * shots[i].i_out + line.intercept)) <= 2.5 * sigma) next.push_back(i);
    if (next.size() < 10 || next == idx) break;
    idx = std::move(next);
    line = impl::tls_line(shots, idx, sx, sy);
  }
  if (!(line.slope < 0.0))
    throw ValidationError("fit_anticorrelation_band: fitted slope " + io::fmt(line.slope) + " >= 0, no anti-correlation");
  // the inlier residual spread is the band unit
  std::vector<double> res;
  for (auto i : idx) res.push_back(shots[i].i_hh - (line.slope * shots[i].i_out + line.intercept));
  sigma = impl::mad_sigma(res);
  if (!(sigma > 0.0)) sigma = 1e-12 * (1.0 + std::abs(line.intercept));
  SelectionBand b{line.slope, line.intercept, half_width_sigmas * sigma};
  b.validate();
  return b;
}

struct Selection {
  std::vector<std::size_t> selected;  // indices into the input
  std::vector<std::size_t> rejected;
};

inline Selection select_shots(const std::vector<ShotRecord>& shots, const SelectionBand& band) {
  band.validate();
  Selection s;
  for (std::size_t i = 0; i < shots.size(); ++i)
    (std::abs(band.residual(shots[i])) <= band.half_width ? s.selected : s.rejected).push_back(i);
  if (s.selected.empty()) throw ValidationError("select_shots: no shot lies inside the selection band");
  return s;
}

inline std::vector<ShotRecord> subset(const std::vector<ShotRecord>& shots, const std::vector<std::size_t>& idx) {
  std::vector<ShotRecord> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(shots.at(i));
  return out;
}

// ---------------------------------------------------------------------------
// absorption histogram

struct Histogram {
  std::vector<double> centers;
  std::vector<double> probability;
  double bin_width = 0.0;

  double mass() const {
    double s = 0.0;
    for (double p : probability) s += p;
    return s;
  }
};

/// Normalized histogram of gain * (reference_level - i_out); bin k is centred at k * bin_width.
inline Histogram absorption_histogram(const std::vector<ShotRecord>& selected, double bin_width, double reference_level,
                                      double gain = 1.0) {
  detail::require(!selected.empty(), "absorption_histogram: empty selection");
  detail::require(bin_width > 0.0 && std::isfinite(bin_width), "absorption_histogram: bin_width must be > 0");
  detail::require(std::isfinite(reference_level), "absorption_histogram: reference_level must be finite");
  detail::require(gain > 0.0 && std::isfinite(gain), "absorption_histogram: gain must be > 0");
  std::vector<long> k;
  for (const auto& s : selected) k.push_back(std::lround(gain * (reference_level - s.i_out) / bin_width));
  const auto [lo, hi] = std::minmax_element(k.begin(), k.end());
  Histogram h;
  h.bin_width = bin_width;
  const long k0 = *lo;
  h.centers.resize(static_cast<std::size_t>(*hi - k0 + 1));
  h.probability.assign(h.centers.size(), 0.0);
  for (std::size_t i = 0; i < h.centers.size(); ++i) h.centers[i] = static_cast<double>(k0 + static_cast<long>(i)) * bin_width;
  const double w = 1.0 / static_cast<double>(selected.size());
  for (long v : k) h.probability[static_cast<std::size_t>(v - k0)] += w;
  return h;
}

inline std::string histogram_csv(const Histogram& h) {
  std::ostringstream os;
  os << "bin_center,probability\n";
  for (std::size_t i = 0; i < h.centers.size(); ++i) os << io::fmt(h.centers[i]) << "," << io::fmt(h.probability[i]) << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Gaussian comb fit

struct CombFit {
  double spacing = 0.0;
  std::vector<double> centers;
  std::vector<double> amplitudes;
  std::vector<double> widths;
  std::vector<double> residual;  // histogram minus model, per bin
  double rss = 0.0;

  double eval(double u) const {
    double s = 0.0;
    for (std::size_t j = 0; j < centers.size(); ++j) {
      const double z = (u - centers[j]) / widths[j];
      s += amplitudes[j] * std::exp(-0.5 * z * z);
    }
    return s;
  }
};

class CombFitError : public ConvergenceError {
public:
  CombFitError(const std::string& what, CombFit best) : ConvergenceError(what), best_(std::move(best)) {}
  const CombFit& best_iterate() const noexcept { return best_; }

private:
  CombFit best_;
};

/// Number of strict local maxima above 5% of the histogram maximum.
inline std::size_t count_local_maxima(const Histogram& h) {
  const auto& p = h.probability;
  if (p.size() < 3) return 0;
  const double top = *std::max_element(p.begin(), p.end());
  std::size_t n = 0;
  for (std::size_t i = 1; i + 1 < p.size(); ++i)
    if (p[i] > p[i - 1] && p[i] >= p[i + 1] && p[i] > 0.05 * top) ++n;
  return n;
}

namespace impl {

// parameters: c0, [s], a_0..a_{n-1}, w_0..w_{n-1}
struct CombFunctor {
  const std::vector<double>& u;
  const std::vector<double>& y;
  int n;
  bool free_spacing;
  double fixed_spacing;
  int inputs() const { return (free_spacing ? 2 : 1) + 2 * n; }
  int values() const { return static_cast<int>(u.size()); }

  void unpack(const Eigen::VectorXd& x, double& c0, double& s, int& off) const {
    c0 = x(0);
    s = free_spacing ? x(1) : fixed_spacing;
    off = free_spacing ? 2 : 1;
  }
  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& f) const {
    double c0, s;
    int off;
    unpack(x, c0, s, off);
    for (int i = 0; i < values(); ++i) {
      double m = 0.0;
      for (int j = 0; j < n; ++j) {
        const double w = x(off + n + j), z = (u[i] - c0 - j * s) / w;
        m += x(off + j) * std::exp(-0.5 * z * z);
      }
      f(i) = m - y[i];
    }
    return 0;
  }
  int df(const Eigen::VectorXd& x, Eigen::MatrixXd& J) const {
    double c0, s;
    int off;
    unpack(x, c0, s, off);
    J.setZero();
    for (int i = 0; i < values(); ++i)
      for (int j = 0; j < n; ++j) {
        const double a = x(off + j), w = x(off + n + j), d = u[i] - c0 - j * s, z = d / w;
        const double e = std::exp(-0.5 * z * z);
        const double dm_dc = a * e * d / (w * w);  // derivative wrt the peak centre
        J(i, 0) += dm_dc;
        if (free_spacing) J(i, 1) += dm_dc * j;
        J(i, off + j) = e;
        J(i, off + n + j) = a * e * d * d / (w * w * w);
      }
    return 0;
  }
};

} // namespace impl

/// Least-squares comb sum_j a_j exp(-(u - c0 - j s)^2 / (2 w_j^2)) with a
/// shared spacing s (Eigen's MINPACK Levenberg-Marquardt).
inline CombFit fit_gaussian_comb(const Histogram& h, double spacing_guess, unsigned n_peaks) {
  detail::require(n_peaks >= 1, "fit_gaussian_comb: n_peaks must be >= 1");
  detail::require(spacing_guess > 0.0 && std::isfinite(spacing_guess), "fit_gaussian_comb: spacing_guess must be > 0");
  detail::require(h.centers.size() == h.probability.size() && h.centers.size() >= 3 * n_peaks + 2,
                  "fit_gaussian_comb: histogram has too few bins");
  const std::size_t maxima = count_local_maxima(h);
  if (maxima < n_peaks)
    throw CombFitError("fit_gaussian_comb: histogram shows " + std::to_string(maxima) + " local maxima, need " +
                           std::to_string(n_peaks) + " (nothing to fit)",
                       CombFit{});

  const auto& u = h.centers;
  const auto& y = h.probability;
  auto sample = [&](double v) {
    const double k = (v - u.front()) / h.bin_width;
    if (k < 0 || k > static_cast<double>(u.size() - 1)) return 0.0;
    const std::size_t i = std::min(static_cast<std::size_t>(k), u.size() - 2);
    const double t = k - static_cast<double>(i);
    return (1 - t) * y[i] + t * y[i + 1];
  };
  // offset that best aligns the comb with the data
  double best_c0 = u.front(), best_score = -1.0;
  const double span = u.back() - u.front();
  for (double c0 = u.front(); c0 <= u.front() + std::max(0.0, span - (n_peaks - 1) * spacing_guess); c0 += 0.25 * h.bin_width) {
    double sc = 0.0;
    for (unsigned j = 0; j < n_peaks; ++j) sc += sample(c0 + j * spacing_guess);
    if (sc > best_score) {
      best_score = sc;
      best_c0 = c0;
    }
  }
  const bool free_s = n_peaks > 1;
  impl::CombFunctor fn{u, y, static_cast<int>(n_peaks), free_s, spacing_guess};
  Eigen::VectorXd x(fn.inputs());
  x(0) = best_c0;
  const int off = free_s ? 2 : 1;
  if (free_s) x(1) = spacing_guess;
  for (unsigned j = 0; j < n_peaks; ++j) {
    x(off + j) = std::max(sample(best_c0 + j * spacing_guess), 1e-6);
    x(off + n_peaks + j) = std::max(0.2 * spacing_guess, h.bin_width);
  }
  Eigen::LevenbergMarquardt<impl::CombFunctor> lm(fn);
  lm.parameters.maxfev = 2000;
  lm.parameters.xtol = 1e-12;
  lm.parameters.ftol = 1e-12;
  const auto status = lm.minimize(x);

  CombFit fit;
  fit.spacing = free_s ? x(1) : spacing_guess;
  for (unsigned j = 0; j < n_peaks; ++j) {
    fit.centers.push_back(x(0) + j * fit.spacing);
    fit.amplitudes.push_back(x(off + j));
    fit.widths.push_back(std::abs(x(off + n_peaks + j)));
  }
  for (std::size_t i = 0; i < u.size(); ++i) {
    fit.residual.push_back(y[i] - fit.eval(u[i]));
    fit.rss += fit.residual.back() * fit.residual.back();
  }
  using S = Eigen::LevenbergMarquardtSpace::Status;
  const bool ok = status == S::RelativeReductionTooSmall || status == S::RelativeErrorTooSmall ||
                  status == S::RelativeErrorAndReductionTooSmall || status == S::CosinusTooSmall ||
                  status == S::FtolTooSmall || status == S::XtolTooSmall || status == S::GtolTooSmall;
  bool sane = std::isfinite(fit.rss) && fit.spacing > 0.0;
  for (unsigned j = 0; j < n_peaks; ++j) sane = sane && fit.amplitudes[j] > 0.0 && fit.widths[j] > 0.0 && std::isfinite(fit.centers[j]);
  if (!ok || !sane)
    throw CombFitError("fit_gaussian_comb: Levenberg-Marquardt did not converge (status " +
                           std::to_string(static_cast<int>(status)) + ")",
                       fit);
  return fit;
}

// ---------------------------------------------------------------------------
// background subtraction

struct BackgroundModel {
  double amplitude = 0.0;
  double mean = 0.0;
  double width = 1.0;
  std::vector<double> sample_u;  // valley positions used
  std::vector<double> sample_v;  // raw minus fit at those positions

  double eval(double u) const {
    const double z = (u - mean) / width;
    return amplitude * std::exp(-0.5 * z * z);
  }
};

namespace impl {
struct GaussFunctor {
  const std::vector<double>& u;
  const std::vector<double>& y;
  int inputs() const { return 3; }
  int values() const { return static_cast<int>(u.size()); }
  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& f) const {
    for (int i = 0; i < values(); ++i) {
      const double z = (u[i] - x(1)) / x(2);
      f(i) = x(0) * std::exp(-0.5 * z * z) - y[i];
    }
    return 0;
  }
  int df(const Eigen::VectorXd& x, Eigen::MatrixXd& J) const {
    for (int i = 0; i < values(); ++i) {
      const double d = u[i] - x(1), z = d / x(2), e = std::exp(-0.5 * z * z);
      J(i, 0) = e;
      J(i, 1) = x(0) * e * d / (x(2) * x(2));
      J(i, 2) = x(0) * e * d * d / (x(2) * x(2) * x(2));
    }
    return 0;
  }
};
} // namespace impl

/// Gaussian background fitted to (raw - fit) at the minima of the fitted comb
/// between neighbouring peaks, plus half a spacing outside either end peak.
/// Each sample averages three bins around the minimum.
inline BackgroundModel estimate_background(const Histogram& h, const CombFit& fit) {
  detail::require(!fit.centers.empty() && fit.spacing > 0.0, "estimate_background: invalid comb fit");
  detail::require(h.centers.size() == h.probability.size() && !h.centers.empty(), "estimate_background: empty histogram");
  BackgroundModel bg;
  const long nb = static_cast<long>(h.centers.size());
  auto bin_of = [&](double u) { return std::lround((u - h.centers.front()) / h.bin_width); };
  std::vector<long> at;
  if (long k = bin_of(fit.centers.front() - 0.5 * fit.spacing); k >= 0) at.push_back(k);
  for (std::size_t j = 0; j + 1 < fit.centers.size(); ++j) {
    const long ka = bin_of(fit.centers[j]), kb = bin_of(fit.centers[j + 1]);
    if (kb - ka < 2) continue;
    long kmin = ka + 1;
    for (long k = ka + 1; k < kb; ++k)
      if (fit.eval(h.centers[k]) < fit.eval(h.centers[kmin])) kmin = k;
    at.push_back(kmin);
  }
  if (long k = bin_of(fit.centers.back() + 0.5 * fit.spacing); k < nb) at.push_back(k);
  for (long k : at) {
    double v = 0.0;
    int m = 0;
    for (long q = std::max(0L, k - 1); q <= std::min(nb - 1, k + 1); ++q, ++m) v += h.probability[q] - fit.eval(h.centers[q]);
    bg.sample_u.push_back(h.centers[k]);
    bg.sample_v.push_back(v / m);
  }
  std::vector<double> pu, pv;
  for (std::size_t i = 0; i < bg.sample_u.size(); ++i)
    if (bg.sample_v[i] > 0.0) {
      pu.push_back(bg.sample_u[i]);
      pv.push_back(bg.sample_v[i]);
    }
  if (pu.size() < 3) return bg;  // nothing measurable under the comb
  double s0 = 0, s1 = 0, s2 = 0;
  for (std::size_t i = 0; i < pu.size(); ++i) {
    s0 += pv[i];
    s1 += pv[i] * pu[i];
    s2 += pv[i] * pu[i] * pu[i];
  }
  Eigen::VectorXd x(3);
  x << *std::max_element(pv.begin(), pv.end()), s1 / s0, std::sqrt(std::max(s2 / s0 - (s1 / s0) * (s1 / s0), h.bin_width * h.bin_width));
  impl::GaussFunctor fn{pu, pv};
  Eigen::LevenbergMarquardt<impl::GaussFunctor> lm(fn);
  lm.parameters.maxfev = 1000;
  lm.minimize(x);
  if (std::isfinite(x(0)) && x(0) > 0.0 && std::isfinite(x(1)) && std::isfinite(x(2)) && x(2) != 0.0) {
    bg.amplitude = x(0);
    bg.mean = x(1);
    bg.width = std::abs(x(2));
  }
  return bg;
}

/// Subtracts the fitted background, clips negatives to zero and renormalizes.
inline Histogram subtract_background(const Histogram& h, const CombFit& fit) {
  const BackgroundModel bg = estimate_background(h, fit);
  Histogram out = h;
  double total = 0.0;
  for (std::size_t i = 0; i < out.centers.size(); ++i) {
    out.probability[i] = std::max(0.0, h.probability[i] - bg.eval(h.centers[i]));
    total += out.probability[i];
  }
  detail::require(total > 0.0, "subtract_background: nothing left after subtraction");
  for (double& p : out.probability) p /= total;
  return out;
}

// ---------------------------------------------------------------------------
// synthetic shots

enum class ShotKind { comb, continuum, uncorrelated };

/// Planted truth for the generator. Harmonic yield Y = yield_per_atom2 * N^2
/// and coherent shift |delta_alpha| = shift_per_sqrt_yield * sqrt(Y); a
/// correlated shot absorbs n ~ Poisson(|delta_alpha|^2) photons.
struct GeneratorParams {
  std::size_t n_shots = 4000;
  double signal_fraction = 0.5;      // correlated shots (comb + continuum)
  double continuum_fraction = 0.2;   // of the correlated shots, broad absorption background
  unsigned n_atoms = 1;
  double yield_per_atom2 = 1.0;
  double shift_per_sqrt_yield = 2.0;
  double comb_spacing = 1.0;         // i_out drop per absorbed photon
  double peak_width = 0.12;          // i_out noise on correlated shots
  double reference_level = 20.0;     // i_out with no absorption
  double hh_gain = 1.0;              // i_hh per unit of i_out drop, scaled by Y
  double hh_noise = 0.1;
  double continuum_width = 2.0;      // spread of the broad correlated absorption (i_out units)
  double background_width = 5.0;     // spread of the uncorrelated shots in both signals
  double energy_jitter = 0.01;       // relative shot-to-shot energy noise
  double i0_nominal = 1.0;

  double planted_yield() const { return yield_per_atom2 * static_cast<double>(n_atoms) * n_atoms; }
  double planted_delta_alpha() const { return shift_per_sqrt_yield * std::sqrt(planted_yield()); }
  double mean_photons() const { return planted_delta_alpha() * planted_delta_alpha(); }
  double planted_slope() const { return -hh_gain * planted_yield(); }

  void validate() const {
    using detail::require;
    require(n_shots >= 1, "generator: n_shots must be >= 1");
    require(signal_fraction >= 0.0 && signal_fraction <= 1.0, "generator: signal_fraction must be in [0, 1]");
    require(continuum_fraction >= 0.0 && continuum_fraction <= 1.0, "generator: continuum_fraction must be in [0, 1]");
    require(n_atoms >= 1, "generator: n_atoms must be >= 1");
    require(yield_per_atom2 > 0.0 && shift_per_sqrt_yield > 0.0, "generator: yield and shift scales must be > 0");
    require(comb_spacing > 0.0 && reference_level > 0.0 && hh_gain > 0.0, "generator: spacing, reference and gain must be > 0");
    require(peak_width >= 0.0 && hh_noise >= 0.0 && continuum_width >= 0.0 && background_width >= 0.0 && energy_jitter >= 0.0,
            "generator: noise widths must be >= 0");
    require(energy_jitter < 0.2, "generator: energy_jitter must be < 0.2");
    require(i0_nominal > 0.0, "generator: i0_nominal must be > 0");
  }
};

struct SyntheticShots {
  std::vector<ShotRecord> shots;
  std::vector<ShotKind> kind;
  std::vector<unsigned> photons;  // absorbed photons (comb shots), 0 otherwise
};

inline SyntheticShots synthesize_shots(const GeneratorParams& g, std::uint64_t seed) {
  g.validate();
  num::Rng rng(seed, 0x9e3779b9u);
  std::mt19937_64 pois_gen(rng.next());
  std::poisson_distribution<unsigned> pois(g.mean_photons());
  const double Y = g.planted_yield();
  const double mean_drop = g.mean_photons() * g.comb_spacing;
  SyntheticShots out;
  for (std::size_t i = 0; i < g.n_shots; ++i) {
    const double E = 1.0 + g.energy_jitter * rng.normal();
    ShotRecord s;
    s.id = i;
    ShotKind k;
    unsigned n = 0;
    double drop, hh;
    if (rng.uniform() < g.signal_fraction) {
      if (rng.uniform() < g.continuum_fraction) {
        k = ShotKind::continuum;
        drop = mean_drop + g.continuum_width * rng.normal();
      } else {
        k = ShotKind::comb;
        n = pois(pois_gen);
        drop = n * g.comb_spacing;
      }
      hh = g.hh_gain * Y * drop + g.hh_noise * rng.normal();
      drop += g.peak_width * rng.normal();
    } else {
      k = ShotKind::uncorrelated;
      drop = mean_drop + g.background_width * rng.normal();
      hh = g.hh_gain * Y * (mean_drop + g.background_width * rng.normal());
    }
    s.i_out = E * (g.reference_level - drop);
    s.i_hh = E * hh;
    s.i_0 = E * g.i0_nominal;
    out.shots.push_back(s);
    out.kind.push_back(k);
    out.photons.push_back(n);
  }
  return out;
}

} // namespace qstrong::qs
