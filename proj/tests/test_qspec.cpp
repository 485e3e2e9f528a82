#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>
#include <set>

#include "qstrong/qspec.hpp"

using namespace qstrong;
using namespace qstrong::qs;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("qstrong_qs_" + name)).string();
}

struct Scores {
  double precision, recall;
};

Scores score(const SyntheticShots& syn, const Selection& sel) {
  std::size_t signal = 0, tp = 0;
  for (auto k : syn.kind) signal += k != ShotKind::uncorrelated;
  for (auto i : sel.selected) tp += syn.kind[i] != ShotKind::uncorrelated;
  return {static_cast<double>(tp) / static_cast<double>(sel.selected.size()), static_cast<double>(tp) / static_cast<double>(signal)};
}

GeneratorParams params(std::size_t n_shots, unsigned n_atoms = 1) {
  GeneratorParams g;
  g.n_shots = n_shots;
  g.n_atoms = n_atoms;
  return g;
}

// Histogram of sum_j a_j G(u; c0 + j s, w) plus an optional broad Gaussian.
Histogram synthetic_histogram(double c0, double s, double w, const std::vector<double>& a, double bg_amp = 0.0,
                              double bg_mean = 0.0, double bg_width = 1.0, double bin = 0.05) {
  Histogram h;
  h.bin_width = bin;
  for (long k = std::lround((c0 - 1.0) / bin); k * bin <= c0 + s * static_cast<double>(a.size()) + 1.0; ++k) {
    const double u = k * bin;
    double v = bg_amp * std::exp(-0.5 * std::pow((u - bg_mean) / bg_width, 2));
    for (std::size_t j = 0; j < a.size(); ++j) v += a[j] * std::exp(-0.5 * std::pow((u - c0 - j * s) / w, 2));
    h.centers.push_back(u);
    h.probability.push_back(v);
  }
  return h;
}

} // namespace

TEST(ShotIo, RoundTripWithOptionalColumns) {
  const auto syn = synthesize_shots(params(50), 3);
  auto shots = syn.shots;
  for (auto& s : shots) {
    s.phi = 0.1 * static_cast<double>(s.id);
    s.i_phi = 2.0 * s.i_out;
  }
  const auto path = tmp_path("shots.csv");
  save_shots(path, shots);
  const auto back = load_shots(path);
  ASSERT_EQ(back.size(), shots.size());
  for (std::size_t i = 0; i < shots.size(); ++i) {
    EXPECT_EQ(back[i].id, shots[i].id);
    EXPECT_EQ(back[i].i_hh, shots[i].i_hh);
    EXPECT_EQ(back[i].i_out, shots[i].i_out);
    EXPECT_EQ(back[i].i_0, shots[i].i_0);
    EXPECT_EQ(back[i].phi, shots[i].phi);
    EXPECT_EQ(back[i].i_phi, shots[i].i_phi);
  }
}

TEST(ShotIo, MalformedFilesReportLine) {
  const auto path = tmp_path("bad.csv");
  auto line_of = [&](const std::string& text) -> std::size_t {
    io::write_file(path, text);
    try {
      load_shots(path);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  EXPECT_EQ(line_of("id,i_hh\n0,1\n"), 1u);
  EXPECT_EQ(line_of("id,i_hh,i_out,phi\n0,1,2,3\n"), 1u);
  EXPECT_EQ(line_of("id,i_hh,i_out,extra\n0,1,2,3\n"), 1u);
  EXPECT_EQ(line_of("id,i_hh,i_out\n0,1,2\n1,1\n"), 3u);
  EXPECT_EQ(line_of("id,i_hh,i_out\n0,1,2\n1.5,1,2\n"), 3u);
  EXPECT_EQ(line_of("id,i_hh,i_out,i_0\n0,1,2,0\n"), 2u);
  EXPECT_EQ(line_of("id,i_hh,i_out\n0,abc,2\n"), 2u);
}

TEST(Energy, NormalizationRemovesCommonFactor) {
  std::vector<ShotRecord> shots;
  for (int i = 0; i < 5; ++i) {
    const double E = 0.9 + 0.05 * i;
    shots.push_back({static_cast<std::size_t>(i), 3.0 * E, 7.0 * E, 2.0 * E, {}, {}});
  }
  const auto n = energy_normalize(shots);
  for (const auto& s : n) {
    EXPECT_NEAR(s.i_hh, 3.0 * 1.0, 1e-12);  // median E is 1.0
    EXPECT_NEAR(s.i_out, 7.0, 1e-12);
  }
  shots[2].i_0.reset();
  EXPECT_THROW(energy_normalize(shots), ValidationError);
}

TEST(Energy, GateKeepsShotsNearMedian) {
  std::vector<ShotRecord> shots;
  for (double e : {1.0, 1.01, 0.99, 1.2, 0.7}) shots.push_back({shots.size(), 1.0, 1.0, e, {}, {}});
  EXPECT_EQ(energy_gate(shots, 0.05).size(), 3u);
  EXPECT_THROW(energy_gate(shots, 0.0), ValidationError);
}

TEST(Band, RecoversPlantedSlope) {
  for (unsigned N : {1u, 2u}) {
    const auto g = params(20000, N);
    const auto shots = energy_normalize(synthesize_shots(g, 11).shots);
    const auto band = fit_anticorrelation_band(shots);
    EXPECT_NEAR(band.slope / g.planted_slope(), 1.0, 0.02) << N;
  }
}

TEST(Band, UncorrelatedOrTooFewShotsRejected) {
  auto g = params(5000);
  g.signal_fraction = 0.0;
  EXPECT_THROW(fit_anticorrelation_band(synthesize_shots(g, 1).shots), ValidationError);
  EXPECT_THROW(fit_anticorrelation_band(synthesize_shots(params(99), 1).shots), ValidationError);
  EXPECT_THROW(fit_anticorrelation_band(synthesize_shots(params(500), 1).shots, 0.0), ValidationError);
}

TEST(Band, OneSigmaKeepsAboutTwoThirdsTwoSigmaMost) {
  const auto syn = synthesize_shots(params(40000), 5);
  const auto shots = energy_normalize(syn.shots);
  const auto s1 = score(syn, select_shots(shots, fit_anticorrelation_band(shots, 1.0)));
  EXPECT_NEAR(s1.recall, 0.68, 0.06);
  const auto s2 = score(syn, select_shots(shots, fit_anticorrelation_band(shots, 2.0)));
  EXPECT_GE(s2.recall, 0.9);
  EXPECT_GE(s2.precision, 0.9);
  EXPECT_GT(s2.recall, s1.recall);
}

TEST(Selection, PartitionAndIdempotence) {
  const auto shots = energy_normalize(synthesize_shots(params(5000), 2).shots);
  const auto band = fit_anticorrelation_band(shots);
  const auto sel = select_shots(shots, band);
  EXPECT_EQ(sel.selected.size() + sel.rejected.size(), shots.size());
  std::set<std::size_t> all(sel.selected.begin(), sel.selected.end());
  all.insert(sel.rejected.begin(), sel.rejected.end());
  EXPECT_EQ(all.size(), shots.size());
  const auto again = select_shots(subset(shots, sel.selected), band);
  EXPECT_EQ(again.selected.size(), sel.selected.size());
  EXPECT_TRUE(again.rejected.empty());
}

TEST(Selection, EquivariantUnderSignalScaling) {
  const auto shots = energy_normalize(synthesize_shots(params(5000), 4).shots);
  auto scaled = shots;
  for (auto& s : scaled) {
    s.i_hh *= 4.0;
    s.i_out *= 2.0;
  }
  const auto b = fit_anticorrelation_band(shots), bs = fit_anticorrelation_band(scaled);
  EXPECT_NEAR(bs.slope, 2.0 * b.slope, 1e-9 * std::abs(b.slope));
  EXPECT_NEAR(bs.intercept, 4.0 * b.intercept, 1e-9 * std::abs(b.intercept));
  EXPECT_NEAR(bs.half_width, 4.0 * b.half_width, 1e-9 * b.half_width);
  EXPECT_EQ(select_shots(scaled, bs).selected, select_shots(shots, b).selected);
}

TEST(Selection, InvalidBandRejected) {
  const auto shots = synthesize_shots(params(10), 1).shots;
  EXPECT_THROW(select_shots(shots, SelectionBand{0.5, 0.0, 1.0}), ValidationError);
  EXPECT_THROW(select_shots(shots, SelectionBand{-1.0, 0.0, 0.0}), ValidationError);
  EXPECT_THROW(select_shots(shots, SelectionBand{-1.0, 1e6, 1e-3}), ValidationError);
}

TEST(Histogram, UnitMassAndBinCentres) {
  const auto shots = energy_normalize(synthesize_shots(params(3000), 6).shots);
  const auto h = absorption_histogram(shots, 0.05, 20.0);
  EXPECT_NEAR(h.mass(), 1.0, 1e-12);
  for (double c : h.centers) EXPECT_NEAR(std::remainder(c, 0.05), 0.0, 1e-12);
  EXPECT_THROW(absorption_histogram({}, 0.05, 20.0), ValidationError);
  EXPECT_THROW(absorption_histogram(shots, 0.0, 20.0), ValidationError);
  EXPECT_THROW(absorption_histogram(shots, 0.05, 20.0, -1.0), ValidationError);
}

TEST(CombFit, SingleGaussianRecovered) {
  const auto h = synthetic_histogram(1.3, 1.0, 0.2, {0.4});
  const auto fit = fit_gaussian_comb(h, 1.0, 1);
  EXPECT_NEAR(fit.centers[0], 1.3, 1e-6);
  EXPECT_NEAR(fit.widths[0], 0.2, 1e-6);
  EXPECT_NEAR(fit.amplitudes[0], 0.4, 1e-6);
  EXPECT_LT(fit.rss, 1e-12);
}

TEST(CombFit, NoiselessCombExact) {
  const std::vector<double> a{0.05, 0.1, 0.2, 0.2, 0.15, 0.1};
  const auto h = synthetic_histogram(0.0, 0.93, 0.12, a);
  const auto fit = fit_gaussian_comb(h, 1.0, 6);
  EXPECT_NEAR(fit.spacing, 0.93, 1e-6);
  for (std::size_t j = 0; j < a.size(); ++j) EXPECT_NEAR(fit.amplitudes[j], a[j], 1e-6);
}

TEST(CombFit, FlatHistogramIsAConvergenceFailure) {
  Histogram h;
  h.bin_width = 0.1;
  for (int k = 0; k < 100; ++k) {
    h.centers.push_back(0.1 * k);
    h.probability.push_back(0.01);
  }
  EXPECT_THROW(fit_gaussian_comb(h, 1.0, 5), CombFitError);
  EXPECT_THROW(fit_gaussian_comb(h, 1.0, 5), ConvergenceError);
  EXPECT_THROW(fit_gaussian_comb(h, -1.0, 5), ValidationError);
}

TEST(CombFit, SyntheticShotsGiveCombSpacing) {
  const auto shots = energy_normalize(synthesize_shots(params(40000), 7).shots);
  const auto chosen = subset(shots, select_shots(shots, fit_anticorrelation_band(shots, 2.0)).selected);
  const auto h = absorption_histogram(chosen, 0.05, 20.0);
  const auto fit = fit_gaussian_comb(h, 1.0, 7);
  EXPECT_NEAR(fit.spacing, 1.0, 0.05);
  // half-width of a comb line near the planted shot noise
  EXPECT_NEAR(fit.widths[3], 0.12, 0.05);
}

TEST(Background, ZeroForPureComb) {
  const auto h = synthetic_histogram(0.0, 1.0, 0.12, {0.1, 0.2, 0.2, 0.15, 0.1});
  const auto fit = fit_gaussian_comb(h, 1.0, 5);
  const auto bg = estimate_background(h, fit);
  for (double u : h.centers) EXPECT_LT(bg.eval(u), 1e-6);
  const auto sub = subtract_background(h, fit);
  EXPECT_NEAR(sub.mass(), 1.0, 1e-12);
}

TEST(Background, BroadPedestalRecovered) {
  const std::vector<double> a{0.1, 0.2, 0.25, 0.2, 0.15, 0.1, 0.05};
  const auto h = synthetic_histogram(0.0, 1.0, 0.12, a, 0.02, 3.0, 2.5);
  const auto fit = fit_gaussian_comb(h, 1.0, 7);
  const auto bg = estimate_background(h, fit);
  // the comb fit soaks up part of the pedestal under each line, so only the
  // valley-level picture is expected to be close
  for (std::size_t i = 0; i < bg.sample_u.size(); ++i) EXPECT_GE(bg.sample_v[i], 0.0);
  EXPECT_GT(bg.amplitude, 0.0);
  const auto sub = subtract_background(h, fit);
  EXPECT_NEAR(sub.mass(), 1.0, 1e-12);
  // valleys are emptier after subtraction
  auto valley = [](const Histogram& x) {
    const auto k = static_cast<std::size_t>(std::lround((3.5 - x.centers.front()) / x.bin_width));
    return x.probability[k] / x.mass();
  };
  EXPECT_LT(valley(sub), valley(h));
}

TEST(Generator, DeterministicAndPoissonPhotons) {
  const auto a = synthesize_shots(params(20000), 9), b = synthesize_shots(params(20000), 9);
  for (std::size_t i = 0; i < a.shots.size(); ++i) ASSERT_EQ(a.shots[i].i_out, b.shots[i].i_out);
  const auto c = synthesize_shots(params(20000), 10);
  EXPECT_NE(a.shots[0].i_out, c.shots[0].i_out);
  double m = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.kind.size(); ++i)
    if (a.kind[i] == ShotKind::comb) m += a.photons[i], ++n;
  m /= static_cast<double>(n);
  EXPECT_NEAR(m, params(1).mean_photons(), 4.0 * std::sqrt(4.0 / n));
}

TEST(Generator, MeanPhotonsScaleWithAtomNumberSquared) {
  for (unsigned N : {1u, 2u, 3u}) {
    const auto g = params(1, N);
    EXPECT_NEAR(g.planted_yield(), N * N, 1e-12);
    EXPECT_NEAR(g.mean_photons(), 4.0 * N * N, 1e-12);
  }
  auto bad = params(10);
  bad.energy_jitter = 0.3;
  EXPECT_THROW(synthesize_shots(bad, 1), ValidationError);
}
