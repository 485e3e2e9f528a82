#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "qstrong/quantum_state.hpp"

using namespace qstrong;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("qstrong_qs_" + name)).string();
}

GridAxes box(double half, std::size_t n) { return GridAxes{-half, half, -half, half, n, n}; }

DensityMatrix random_rho(unsigned n_max, unsigned seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> nd;
  Eigen::MatrixXcd A(n_max + 1, n_max + 1);
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j) A(i, j) = cplx(nd(gen), nd(gen));
  Eigen::MatrixXcd r = A * A.adjoint();
  r /= r.trace().real();
  return DensityMatrix{0.5 * (r + r.adjoint())};
}

} // namespace

TEST(CoherentAmplitude, VacuumPeakAndNormalization) {
  EXPECT_NEAR(std::abs(coherent_position_amplitude(0.0, 0.0) - std::pow(oracle::pi, -0.25)), 0.0, 1e-15);
  for (cplx a : {cplx(0.0, 0.0), cplx(1.4, -0.3), cplx(-0.7, 2.1)}) {
    const double n = oracle::simpson([&](double x) { return std::norm(coherent_position_amplitude(x, a)); }, -15, 15, 6000);
    EXPECT_NEAR(n, 1.0, 1e-12);
  }
}

TEST(CoherentAmplitude, DensityPeaksAtScaledRealPart) {
  const cplx a(1.3, 0.8);
  double best = 0.0, arg = 0.0;
  for (int i = 0; i <= 40000; ++i) {
    const double x = -2.0 + 6.0 * i / 40000.0, v = std::norm(coherent_position_amplitude(x, a));
    if (v > best) best = v, arg = x;
  }
  EXPECT_NEAR(arg, std::sqrt(2.0) * a.real(), 2e-4);
}

TEST(CoherentWavefunction, MatchesFockSeries) {
  // the displacement phase makes <x|alpha> equal to the Hermite expansion
  for (cplx a : {cplx(0.9, 0.0), cplx(0.6, 1.1), cplx(-1.2, -0.4)}) {
    const auto c = oracle::coherent_fock(a, 60);
    for (double x : {-2.0, -0.3, 0.0, 1.1, 2.7})
      EXPECT_LT(std::abs(coherent_wavefunction(x, a) - oracle::wavefunction(c, x)), 1e-12);
  }
}

TEST(CoherentOverlap, ReferenceMagnitudes) {
  EXPECT_NEAR(std::abs(coherent_overlap(1.4, 1.4) - cplx(1.0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(coherent_overlap(1.4, 1.9)), 0.8825, 5e-5);
  EXPECT_NEAR(std::abs(coherent_overlap(cplx(0, 3.7), cplx(0, 4.5))), 0.7261, 5e-5);
}

TEST(CoherentOverlap, MagnitudeExactForRandomPairs) {
  std::mt19937 gen(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int k = 0; k < 200; ++k) {
    const cplx a(u(gen), u(gen)), d(u(gen), u(gen));
    EXPECT_NEAR(std::abs(coherent_overlap(a, a + d)), std::exp(-0.5 * std::norm(d)), 1e-14);
  }
}

TEST(CoherentOverlap, AgreesWithFockInnerProduct) {
  const cplx a(0.8, -0.5), b(1.3, 0.9);
  const cplx fock = oracle::coherent_fock(a, 60).dot(oracle::coherent_fock(b, 60));
  EXPECT_LT(std::abs(coherent_overlap(a, b) - fock), 1e-13);
}

TEST(FockExpansion, VacuumAndPoisson) {
  const auto v = fock_expand_superposition({{1.0, 0.0}}, 10);
  EXPECT_EQ(v(0), cplx(1.0));
  EXPECT_EQ(v.tail(10).norm(), 0.0);
  const cplx a(1.2, -0.7);
  const auto c = fock_expand_superposition({{1.0, a}}, 40);
  for (unsigned n = 0; n <= 40; ++n) EXPECT_NEAR(std::norm(c(n)), oracle::poisson(std::norm(a), n), 1e-14);
  EXPECT_NEAR(mean_photon_number(c), std::norm(a), 1e-10);
}

TEST(FockExpansion, CatNormMatchesClosedForm) {
  const cplx alpha(1.4, 0.0), da(0.5, 0.0);
  const cplx eps = coherent_overlap(alpha, alpha + da);
  const auto c = fock_expand_superposition({{1.0, alpha + da}, {-std::conj(eps), alpha}}, 40);
  EXPECT_NEAR(c.squaredNorm(), 1.0 - std::exp(-std::norm(da)), 1e-12);
  const CoherentSuperposition s{{{1.0, alpha + da}, {-std::conj(eps), alpha}}};
  EXPECT_NEAR(s.norm2(), 1.0 - std::exp(-std::norm(da)), 1e-12);
}

TEST(FockExpansion, TooSmallCutoffNamesRequirement) {
  try {
    fock_expand_superposition({{1.0, 3.0}}, 10);
    FAIL();
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("n_max >= " + std::to_string(required_n_max({3.0}))), std::string::npos) << msg;
  }
}

TEST(WignerValue, VacuumAndSinglePhoton) {
  const auto vac = DensityMatrix::fock(0, 0);
  EXPECT_NEAR(wigner_value(vac, 0.0), 2.0 / oracle::pi, 1e-15);
  const auto one = DensityMatrix::fock(1, 1);
  for (double r : {0.0, 0.3, 0.7, 1.5}) {
    const double expect = 2.0 / oracle::pi * (4.0 * r * r - 1.0) * std::exp(-2.0 * r * r);
    EXPECT_NEAR(wigner_value(one, std::polar(r, 0.7)), expect, 1e-14);
  }
}

TEST(WignerValue, MatchesParityOracleForRandomStates) {
  const auto rho = random_rho(6, 17);
  for (cplx b : {cplx(0.0, 0.0), cplx(0.4, -0.9), cplx(-1.3, 0.2), cplx(2.0, 1.0)})
    EXPECT_NEAR(wigner_value(rho, b), oracle::parity_wigner(rho.rho, b), 1e-10);
}

TEST(WignerValue, DisplacedFockMatchesOracle) {
  // D(alpha)|2> built independently by matrix exponential
  const int dim = 40;
  const Eigen::MatrixXcd D = oracle::displacement(cplx(0.8, -0.6), dim);
  const Eigen::VectorXcd psi = D.col(2);
  const auto rho = DensityMatrix::pure(psi);
  for (cplx b : {cplx(0.8, -0.6), cplx(0.0, 0.0), cplx(1.5, 0.3)})
    EXPECT_NEAR(wigner_value(rho, b), oracle::parity_wigner(psi, b), 1e-8);
  EXPECT_NEAR(wigner_value(rho, cplx(0.8, -0.6)), 2.0 / oracle::pi, 1e-8);  // even Fock state, parity +1
}

TEST(WignerValue, CatMatchesWavefunctionQuadrature) {
  const cplx alpha(1.4, 0.0), da(0.5, 0.0);
  const cplx eps = coherent_overlap(alpha, alpha + da);
  const CoherentSuperposition s{{{1.0, alpha + da}, {-std::conj(eps), alpha}}};
  const auto rho = DensityMatrix::pure(fock_expand_superposition(s.terms, 40));
  const double n2 = s.norm2();
  for (auto [x, p] : {std::pair{2.1, 0.0}, std::pair{1.0, 0.5}, std::pair{3.0, -1.2}}) {
    const double w = oracle::wigner_from_wavefunction([&](double y) { return s.wavefunction(y); }, x, p) / n2;
    EXPECT_NEAR(wigner_value(rho, WignerGrid::beta(x, p)), w, 1e-8);
  }
}

TEST(WignerGrid, CoherentPeakLocationAndHeight) {
  const cplx a(1.0, -0.5);
  const auto rho = DensityMatrix::pure(oracle::coherent_fock(a, 40));
  const auto g = wigner_from_density_matrix(rho, GridAxes{-3, 5, -5, 3, 161, 161});
  Eigen::Index ip, ix;
  const double peak = g.values.maxCoeff(&ip, &ix);
  EXPECT_NEAR(g.x_axis[ix], std::sqrt(2.0) * a.real(), 0.026);
  EXPECT_NEAR(g.p_axis[ip], std::sqrt(2.0) * a.imag(), 0.026);
  EXPECT_NEAR(peak, 2.0 / oracle::pi, 1e-3);
}

TEST(WignerGrid, IntegratesToOneForValidStates) {
  for (unsigned seed : {1u, 2u, 3u}) {
    const auto g = wigner_from_density_matrix(random_rho(5, seed), box(8.0, 129));
    EXPECT_NEAR(integrate_wigner(g), 1.0, 1e-6);
  }
  const auto vac = wigner_from_density_matrix(DensityMatrix::fock(0, 3), box(6.0, 97));
  EXPECT_NEAR(integrate_wigner(vac), 1.0, 1e-6);
  const auto one = wigner_from_density_matrix(DensityMatrix::fock(1, 3), box(6.0, 97));
  EXPECT_NEAR(wigner_mean_photon(one), 1.0, 1e-6);
  EXPECT_NEAR(negativity_volume(vac), 0.0, 1e-15);
  EXPECT_GT(negativity_volume(one), 0.1);
}

TEST(WignerGrid, ZeroGridIntegratesToZero) {
  auto g = box(2.0, 11).make();
  EXPECT_EQ(integrate_wigner(g), 0.0);
}

TEST(WignerGrid, CatIntegratesToOne) {
  const cplx alpha(1.4, 0.0), da(0.5, 0.0);
  const cplx eps = coherent_overlap(alpha, alpha + da);
  const auto rho = DensityMatrix::pure(fock_expand_superposition({{1.0, alpha + da}, {-std::conj(eps), alpha}}, 40));
  const auto g = wigner_from_density_matrix(rho, GridAxes{-4, 7, -5.5, 5.5, 111, 111});
  EXPECT_NEAR(integrate_wigner(g), 1.0, 1e-6);
}

TEST(WignerGrid, CoarseGridRejectedUnlessAllowed) {
  const auto vac = DensityMatrix::fock(0, 2);
  EXPECT_THROW(wigner_from_density_matrix(vac, box(5.0, 21)), ValidationError);
  EXPECT_NO_THROW(wigner_from_density_matrix(vac, box(5.0, 21), true));
}

TEST(DensityMatrix, ValidationCatchesBadMatrices) {
  DensityMatrix r{Eigen::MatrixXcd::Identity(3, 3)};
  EXPECT_THROW(r.validate(), ValidationError);  // trace 3
  r.rho /= 3.0;
  EXPECT_NO_THROW(r.validate());
  r.rho(0, 1) = cplx(0.0, 0.1);
  EXPECT_THROW(r.validate(), ValidationError);  // not Hermitian
  DensityMatrix neg{Eigen::MatrixXcd::Zero(2, 2)};
  neg.rho(0, 0) = 1.5;
  neg.rho(1, 1) = -0.5;
  EXPECT_THROW(neg.validate(), ValidationError);
}

TEST(Serialization, WignerRoundTrip) {
  const auto g = wigner_from_density_matrix(random_rho(3, 9), GridAxes{-2, 2, -1, 1, 33, 17});
  const auto path = tmp_path("w.csv");
  save_wigner(path, g);
  const auto r = load_wigner(path);
  ASSERT_EQ(r.values.rows(), g.values.rows());
  ASSERT_EQ(r.values.cols(), g.values.cols());
  EXPECT_LT((r.values - g.values).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(r.x_axis, g.x_axis);
}

TEST(Serialization, WignerRaggedRowIsParseError) {
  const auto path = tmp_path("ragged.csv");
  io::write_file(path, "p\\x,0,1\n0,0.1,0.2\n1,0.3\n");
  try {
    load_wigner(path);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Serialization, DensityMatrixRoundTrip) {
  const auto rho = random_rho(4, 21);
  const auto path = tmp_path("rho.csv");
  io::write_file(path, density_matrix_csv(rho));
  const auto r = load_density_matrix(path);
  EXPECT_LT((r.rho - rho.rho).cwiseAbs().maxCoeff(), 1e-15);
}
