#include <gtest/gtest.h>

#include "oracles.hpp"
#include "qstrong/field.hpp"

using namespace qstrong;

namespace {

LaserParams sin2_pulse() {
  LaserParams p;
  p.envelope = Envelope::sin2;
  return p;
}

LaserParams flat_field() {
  LaserParams p;
  p.envelope = Envelope::flat;
  return p;
}

} // namespace

TEST(Envelope, Sin2StartsAtZeroAndPeaksMidPulse) {
  const auto p = sin2_pulse();
  EXPECT_DOUBLE_EQ(envelope(0.0, p), 0.0);
  EXPECT_NEAR(envelope(0.5 * p.duration(), p), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(envelope(-1.0, p), 0.0);
  EXPECT_DOUBLE_EQ(envelope(p.duration() + 1.0, p), 0.0);
}

TEST(Envelope, Sin2SquaredIntegralIsThreeEighthsOfPulse) {
  const auto p = sin2_pulse();
  const double T = p.duration();
  const double v = oracle::simpson([&](double t) { return std::pow(envelope(t, p), 2); }, 0.0, T, 20000);
  EXPECT_NEAR(v / T, 0.375, 1e-10);
}

TEST(Envelope, StaysInUnitIntervalForAllKinds) {
  for (auto kind : {Envelope::sin2, Envelope::gaussian, Envelope::flat}) {
    LaserParams p;
    p.envelope = kind;
    for (int i = -200; i <= 1400; ++i) {
      const double t = p.duration() * i / 1200.0;
      const double f = envelope(t, p);
      ASSERT_GE(f, 0.0);
      ASSERT_LE(f, 1.0);
    }
  }
}

TEST(Field, ZeroAmplitudeGivesZeroFieldAndPotential) {
  auto p = sin2_pulse();
  p.E0 = 0.0;
  for (double t : {0.0, 100.0, 700.0, 1300.0}) {
    EXPECT_EQ(classical_field(t, p), 0.0);
    EXPECT_EQ(vector_potential(t, p), 0.0);
  }
}

TEST(Field, FlatFieldIsMonochromaticWithPeakE0) {
  const auto p = flat_field();
  const double T = p.period();
  double peak = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double t = T * i / 20000.0;
    EXPECT_NEAR(classical_field(t, p), classical_field(t + T, p), 1e-14);
    peak = std::max(peak, std::abs(classical_field(t, p)));
  }
  EXPECT_NEAR(peak, p.E0, 1e-12);
}

TEST(Field, SinPulseMaximumSitsAtCentre) {
  const auto p = sin2_pulse();
  EXPECT_NEAR(classical_field(p.center(), p), p.E0, 1e-15);
}

TEST(VectorPotential, FlatAmplitudeIsCE0OverOmega) {
  const auto p = flat_field();
  double peak = 0.0;
  for (int i = 0; i < 4000; ++i) peak = std::max(peak, std::abs(vector_potential(p.period() * i / 4000.0, p)));
  EXPECT_NEAR(peak, au::speed_of_light * p.E0 / p.omega, 1e-9 * peak);
}

TEST(VectorPotential, FlatCycleAverageVanishes) {
  const auto p = flat_field();
  const double v = oracle::simpson([&](double t) { return vector_potential(t, p); }, 0.3, 0.3 + p.period(), 4000);
  EXPECT_NEAR(v, 0.0, 1e-9 * au::speed_of_light * p.E0 / p.omega * p.period());
}

TEST(VectorPotential, FiniteDifferenceReproducesField) {
  for (auto kind : {Envelope::flat, Envelope::sin2, Envelope::gaussian}) {
    LaserParams p;
    p.envelope = kind;
    const double dt = p.period() / 2000.0, c = au::speed_of_light;
    double worst = 0.0;
    for (int i = 1; i < 60; ++i) {
      const double t = p.center() + (i - 30) * 0.137 * p.period();
      const double fd = -(vector_potential(t + 0.5 * dt, p) - vector_potential(t - 0.5 * dt, p)) / (dt * c);
      worst = std::max(worst, std::abs(fd - classical_field(t, p)) / p.E0);
    }
    EXPECT_LT(worst, 1e-6) << to_string(kind);
  }
}

TEST(VectorPotential, VanishesAfterSin2Pulse) {
  const auto p = sin2_pulse();
  EXPECT_NEAR(vector_potential(p.duration() + 10.0, p), 0.0, 1e-9 * au::speed_of_light * p.E0 / p.omega);
  EXPECT_EQ(vector_potential(-5.0, p), 0.0);
}

TEST(Ponderomotive, ReferenceValueAndQuadraticScaling) {
  EXPECT_EQ(ponderomotive(0.0, 0.057), 0.0);
  EXPECT_NEAR(ponderomotive(0.053, 0.057), 0.2161, 5e-5);
  const double u1 = ponderomotive(0.02, 0.057), u2 = ponderomotive(0.04, 0.057), u3 = ponderomotive(0.06, 0.057);
  EXPECT_NEAR(u2 / u1, 4.0, 1e-12);
  EXPECT_NEAR(u3 / u1, 9.0, 1e-12);
  EXPECT_THROW(ponderomotive(0.05, 0.0), ValidationError);
}

TEST(LaserParams, ValidationRejectsBadValues) {
  LaserParams p;
  p.E0 = -1.0;
  EXPECT_THROW(p.validate(), ValidationError);
  p = LaserParams{};
  p.omega = 0.0;
  EXPECT_THROW(p.validate(), ValidationError);
  p = LaserParams{};
  p.Ip = 0.0;
  EXPECT_THROW(p.validate(), ValidationError);
  p = LaserParams{};
  p.n_atoms = 0;
  EXPECT_THROW(p.validate(), ValidationError);
  p = LaserParams{};
  p.n_cycles = 11.5;
  EXPECT_THROW(p.validate(), ValidationError);
  p = LaserParams{};
  p.envelope = Envelope::gaussian;
  p.fwhm_cycles = 6.0;  // 8 sigma > 12 cycles
  EXPECT_THROW(p.validate(), ValidationError);
  EXPECT_THROW(envelope_from_string("square"), ValidationError);
}

TEST(LaserParams, WavelengthOf0057IsAbout800nm) {
  LaserParams p;
  EXPECT_NEAR(p.wavelength_nm(), 799.3, 1.0);
}
