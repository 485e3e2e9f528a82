#include <gtest/gtest.h>

#include <filesystem>

#include "oracles.hpp"
#include "qstrong/tomography.hpp"

using namespace qstrong;
using namespace qstrong::tomo;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("qstrong_tomo_" + name)).string();
}

const CoherentSuperposition vacuum{{{1.0, 0.0}}};

double sample_variance(const std::vector<double>& v) {
  double m = 0.0, s = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

// Expectation of the FBP estimator for exact marginals, by Simpson over x.
template <class State>
double fbp_expectation(const State& st, double x, double p, double kc, int n_phases) {
  double tot = 0.0;
  for (int k = 0; k < n_phases; ++k) {
    const double phi = pi * k / n_phases, s = x * std::cos(phi) + p * std::sin(phi);
    tot += oracle::simpson([&](double xp) { return oracle::fbp_kernel(s - xp, kc, 2000) * quadrature_distribution(st, phi, xp); },
                           -12.0, 12.0, 4000);
  }
  return tot / n_phases / pi;
}

} // namespace

TEST(QuadratureDistribution, VacuumIsGaussianWithVarianceHalf) {
  for (double phi : {0.0, 0.7, 2.0})
    for (double x : {-1.5, 0.0, 0.4, 2.2})
      EXPECT_NEAR(quadrature_distribution(vacuum, phi, x), std::exp(-x * x) / std::sqrt(pi), 1e-15);
}

TEST(QuadratureDistribution, CoherentCentreAndRotation) {
  const cplx a(1.2, -0.8);
  const CoherentSuperposition s{{{1.0, a}}};
  for (double phi : {0.0, 0.9, 2.5}) {
    const double mean = oracle::simpson([&](double x) { return x * quadrature_distribution(s, phi, x); }, -12, 12);
    EXPECT_NEAR(mean, std::sqrt(2.0) * std::abs(a) * std::cos(phi - std::arg(a)), 1e-10);
  }
}

TEST(QuadratureDistribution, CatNormalizedAtSixteenPhasesAndMatchesFockRoute) {
  const auto cat = hhg::cat_from_magnitudes(1.4, 0.5);
  const auto rho = DensityMatrix::pure(fock_expand_superposition(cat.superposition().terms, 40));
  for (int k = 0; k < 16; ++k) {
    const double phi = pi * k / 16.0;
    EXPECT_NEAR(oracle::simpson([&](double x) { return quadrature_distribution(cat, phi, x); }, -12, 12, 6000), 1.0, 1e-8);
    for (double x : {-0.5, 1.0, 2.3}) EXPECT_NEAR(quadrature_distribution(cat, phi, x), quadrature_distribution(rho, phi, x), 1e-10);
  }
}

TEST(Sampling, VacuumVarianceAndDeterminism) {
  const auto d = sample_homodyne(vacuum, phase_grid(10), 10000, 42);
  EXPECT_EQ(d.size(), 100000u);
  EXPECT_NEAR(sample_variance(d.x), 0.5, 0.01);
  const auto again = sample_homodyne(vacuum, phase_grid(10), 10000, 42);
  EXPECT_EQ(d.x, again.x);
  EXPECT_EQ(d.phi, again.phi);
  const auto other = sample_homodyne(vacuum, phase_grid(10), 10000, 43);
  EXPECT_NE(d.x, other.x);
  EXPECT_THROW(sample_homodyne(vacuum, {0.0}, 0, 1), ValidationError);
  EXPECT_THROW(sample_homodyne(vacuum, {3.5}, 10, 1), ValidationError);
}

TEST(Sampling, CoherentPerPhaseMeansTrackTheCosine) {
  const cplx a = std::polar(1.5, 0.6);
  const std::size_t n = 4000;
  const auto phases = phase_grid(12);
  const auto d = sample_homodyne(CoherentSuperposition{{{1.0, a}}}, phases, n, 7);
  for (std::size_t k = 0; k < phases.size(); ++k) {
    double m = 0.0;
    for (std::size_t i = k * n; i < (k + 1) * n; ++i) m += d.x[i];
    m /= static_cast<double>(n);
    EXPECT_NEAR(m, std::sqrt(2.0) * std::abs(a) * std::cos(phases[k] - std::arg(a)), 3.0 * std::sqrt(0.5 / n)) << k;
  }
}

TEST(Calibration, ScaleToVacuum) {
  QuadratureDataset calibrated;
  // unbiased variance exactly 1/2
  const double h = std::sqrt(0.5 * 999.0 / 1000.0);
  for (int i = 0; i < 1000; ++i) {
    calibrated.phi.push_back(0.0);
    calibrated.x.push_back(i % 2 ? h : -h);
  }
  const auto same = scale_to_vacuum(calibrated, calibrated);
  EXPECT_NEAR(same.vacuum_scale, 1.0, 1e-3);

  QuadratureDataset wide = calibrated;
  for (double& v : wide.x) v *= 2.0;  // variance 2
  EXPECT_NEAR(sample_variance(wide.x), 2.0, 1e-12);
  auto data = sample_homodyne(vacuum, phase_grid(8), 100, 1);
  const auto scaled = scale_to_vacuum(data, wide);
  EXPECT_NEAR(scaled.vacuum_scale, 0.5, 1e-12);
  EXPECT_NEAR(scaled.x[3], 0.5 * data.x[3], 1e-15);
  EXPECT_EQ(scaled.phase_counts(), data.phase_counts());

  QuadratureDataset flat;
  flat.phi = {0.0, 0.0, 0.0};
  flat.x = {1.0, 1.0, 1.0};
  EXPECT_THROW(scale_to_vacuum(data, flat), ValidationError);
}

TEST(Kernel, ClosedFormMatchesQuadratureAndIsEven) {
  EXPECT_NEAR(fbp_kernel(0.0, default_kc), 11.045, 5e-4);
  EXPECT_NEAR(fbp_kernel(0.0, default_kc), oracle::fbp_kernel(0.0, default_kc), 1e-9);
  for (int i = -2000; i <= 2000; ++i) {
    const double z = 10.0 * i / 2000.0 + 1e-5 * (i % 3);
    ASSERT_NEAR(fbp_kernel(z, default_kc), oracle::fbp_kernel(z, default_kc), 1e-8) << z;
    ASSERT_EQ(fbp_kernel(z, default_kc), fbp_kernel(-z, default_kc));
  }
  for (double z : {-3.0, -0.01, 1e-5, 0.2, 1.7}) {
    const double h = 1e-5;
    const double fd = (fbp_kernel(z + h, 4.7) - fbp_kernel(z - h, 4.7)) / (2 * h);
    EXPECT_NEAR(fbp_kernel_derivative(z, 4.7), fd, 1e-5);
  }
  EXPECT_THROW(fbp_kernel(0.1, 0.0), ValidationError);
}

TEST(Fbp, TooFewPhasesRejected) {
  const auto d = sample_homodyne(vacuum, phase_grid(7), 100, 1);
  EXPECT_THROW(reconstruct_wigner_fbp(d, default_kc, GridAxes{-3, 3, -3, 3, 11, 11}), ValidationError);
}

TEST(Fbp, LinearInTheDataset) {
  const auto a = sample_homodyne(vacuum, phase_grid(10), 300, 1);
  const auto b = sample_homodyne(CoherentSuperposition{{{1.0, cplx(0.5, 0.5)}}}, phase_grid(10), 100, 2);
  QuadratureDataset ab = a;
  ab.append(b);
  const GridAxes ax{-4, 4, -4, 4, 41, 41};
  const auto wa = reconstruct_wigner_fbp(a, default_kc, ax), wb = reconstruct_wigner_fbp(b, default_kc, ax);
  const auto wab = reconstruct_wigner_fbp(ab, default_kc, ax);
  const Eigen::MatrixXd mix = (300.0 * wa.values + 100.0 * wb.values) / 400.0;
  EXPECT_LT((wab.values - mix).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Fbp, MatchesDirectKernelSum) {
  const auto d = sample_homodyne(hhg::cat_from_magnitudes(1.4, 0.5), phase_grid(10), 100, 4);
  const GridAxes ax{-4, 4, -4, 4, 17, 17};
  const auto g = reconstruct_wigner_fbp(d, default_kc, ax);
  for (std::size_t ip = 0; ip < 17; ip += 4)
    for (std::size_t ix = 0; ix < 17; ix += 3) {
      double s = 0.0;
      for (std::size_t k = 0; k < d.size(); ++k)
        s += oracle::fbp_kernel(g.x_axis[ix] * std::cos(d.phi[k]) + g.p_axis[ip] * std::sin(d.phi[k]) - d.x[k], default_kc, 400);
      EXPECT_NEAR(g.at(ip, ix), s / (pi * static_cast<double>(d.size())), 1e-8);
    }
}

TEST(Fbp, VacuumRoundTrip) {
  const auto d = sample_homodyne(vacuum, phase_grid(20), 5000, 11);
  const GridAxes ax{-4, 4, -4, 4, 41, 41};
  const auto g = reconstruct_wigner_fbp(d, default_kc, ax);
  const auto ref = wigner_from_density_matrix(DensityMatrix::fock(0, 0), ax, true);
  EXPECT_NEAR(g.at(20, 20), 2.0 / pi, 0.02);
  EXPECT_LT(wigner_error_estimate(g, ref).rmse, 0.01);
}

TEST(Fbp, CutoffBiasOnCoherentPeakIsWithinBenchmark) {
  // infinite-shot limit of the estimator with 20 phases
  const cplx a(1.0, 0.5);
  const CoherentSuperposition s{{{1.0, a}}};
  const double w = fbp_expectation(s, std::sqrt(2.0) * a.real(), std::sqrt(2.0) * a.imag(), default_kc, 20);
  EXPECT_LE(std::abs(w - 2.0 / pi), 0.004);
}

TEST(Fbp, LargerCutoffRingsMoreOnCoarseData) {
  const auto d = sample_homodyne(vacuum, phase_grid(20), 200, 5);
  const GridAxes ax{-6, 6, -6, 6, 61, 61};
  auto far_rms = [&](double kc) {
    const auto g = reconstruct_wigner_fbp(d, kc, ax);
    double s = 0.0;
    int n = 0;
    for (std::size_t ip = 0; ip < 61; ++ip)
      for (std::size_t ix = 0; ix < 61; ++ix)
        if (std::hypot(g.x_axis[ix], g.p_axis[ip]) > 4.0) s += g.at(ip, ix) * g.at(ip, ix), ++n;
    return std::sqrt(s / n);
  };
  EXPECT_GT(far_rms(2.0 * default_kc), far_rms(default_kc));
}

TEST(Mle, VacuumRecovered) {
  const auto d = sample_homodyne(vacuum, phase_grid(10), 2000, 3);
  const auto r = reconstruct_density_matrix(d, 6, 2000);
  EXPECT_GT(r.rho.rho(0, 0).real(), 0.98);
  EXPECT_NO_THROW(r.rho.validate());
}

TEST(Mle, CoherentDiagonalIsPoissonAndLikelihoodMonotone) {
  const auto d = sample_homodyne(CoherentSuperposition{{{1.0, cplx(0.0, 1.0)}}}, phase_grid(20), 2000, 8);
  const auto r = reconstruct_density_matrix(d, 10, 3000);
  double tv = 0.0;
  for (unsigned n = 0; n <= 10; ++n) tv += std::abs(r.rho.rho(n, n).real() - oracle::poisson(1.0, n));
  EXPECT_LT(0.5 * tv, 0.02);
  ASSERT_EQ(r.log_likelihood.size(), r.iterations + 1);
  for (std::size_t i = 1; i < r.log_likelihood.size(); ++i) EXPECT_GE(r.log_likelihood[i], r.log_likelihood[i - 1]);
  EXPECT_NEAR(mean_photon_from_rho(r.rho), 1.0, 0.05);
}

TEST(Mle, NonConvergenceCarriesLastIterate) {
  const auto d = sample_homodyne(CoherentSuperposition{{{1.0, 1.0}}}, phase_grid(10), 500, 2);
  try {
    reconstruct_density_matrix(d, 8, 2);
    FAIL() << "expected MleConvergenceError";
  } catch (const MleConvergenceError& e) {
    EXPECT_NO_THROW(e.last_iterate().validate(1e-8));
    EXPECT_EQ(e.exit_code(), 3);
  }
}

TEST(Mle, LargeCatMeanPhotonWithinFourPercent) {
  const auto cat = hhg::cat_from_magnitudes(3.7, 0.8);
  const auto d = sample_homodyne(cat, phase_grid(20), 5000, 9);
  const auto r = reconstruct_density_matrix(d, 30, 3000);
  EXPECT_NEAR(mean_photon_from_rho(r.rho) / 9.124, 1.0, 0.04);
}

TEST(Mle, MeanPhotonErrorShrinksWithShots) {
  const CoherentSuperposition s{{{1.0, cplx(0.8, 0.6)}}};
  std::vector<double> err;
  for (std::size_t shots : {50u, 500u, 5000u}) {
    double e = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto r = reconstruct_density_matrix(sample_homodyne(s, phase_grid(10), shots, seed), 8, 3000);
      e += std::abs(mean_photon_from_rho(r.rho) - 1.0);
    }
    err.push_back(e / 5.0);
  }
  EXPECT_GT(err[0], err[1]);
  EXPECT_GT(err[1], err[2]);
}

TEST(MeanPhoton, ReferenceStates) {
  EXPECT_EQ(mean_photon_from_rho(DensityMatrix::fock(0, 3)), 0.0);
  EXPECT_EQ(mean_photon_from_rho(DensityMatrix::fock(1, 3)), 1.0);
  const auto cat = hhg::cat_from_magnitudes(1.4, 0.5);
  const auto rho = DensityMatrix::pure(fock_expand_superposition(cat.superposition().terms, 40));
  EXPECT_NEAR(mean_photon_from_rho(rho), 1.690, 5e-4);
}

TEST(ErrorEstimate, IdenticalOffsetAndMismatch) {
  auto g = GridAxes{-1, 1, -1, 1, 5, 5}.make();
  g.values.setConstant(0.1);
  EXPECT_EQ(wigner_error_estimate(g, g).max_abs, 0.0);
  auto h = g;
  h.values.array() += 0.004;
  const auto e = wigner_error_estimate(h, g);
  EXPECT_NEAR(e.max_abs, 0.004, 1e-15);
  EXPECT_NEAR(e.rmse, 0.004, 1e-15);
  const auto other = GridAxes{-1, 1, -1, 1.5, 5, 5}.make();
  EXPECT_THROW(wigner_error_estimate(other, g), ValidationError);
}

TEST(DatasetIo, RoundTripAndErrors) {
  auto d = sample_homodyne(vacuum, phase_grid(8), 20, 77);
  d.vacuum_scale = 0.9;
  const auto path = tmp_path("ds.csv");
  save_dataset(path, d);
  const auto r = load_dataset(path);
  EXPECT_EQ(r.phi, d.phi);
  EXPECT_EQ(r.x, d.x);
  EXPECT_EQ(r.vacuum_scale, 0.9);
  ASSERT_TRUE(r.seed.has_value());
  EXPECT_EQ(*r.seed, 77u);

  io::write_file(path, "phi_rad,x\n0,1\n4.0,1\n");
  try {
    load_dataset(path);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  io::write_file(path, "x,phi_rad\n0,1\n");
  EXPECT_THROW(load_dataset(path), ParseError);
}
