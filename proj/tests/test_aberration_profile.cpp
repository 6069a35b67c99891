// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "abench/aberration_profile.hpp"
#include "support.hpp"

using namespace abench;

namespace {

// Brute-force normalized biased autocorrelation and its first half-max
// crossing, written independently of the library routine.
double reference_fwhm(const std::vector<double>& d, double pitch) {
  const std::size_t n = d.size();
  std::vector<double> r(n);
  for (std::size_t k = 0; k < n; ++k) {
    double s = 0;
    for (std::size_t i = k; i < n; ++i) s += d[i] * d[i - k];
    r[k] = s;
  }
  for (std::size_t k = 1; k < n; ++k) {
    const double a = r[k - 1] / r[0], b = r[k] / r[0];
    if (b < 0.5) return 2.0 * pitch * ((k - 1) + (a - 0.5) / (a - b));
  }
  return NAN;
}

}  // namespace

TEST(Profile, ExactRmsAndZeroMean) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto g = abench::testing::gen(seed);
    ProfileSpec spec{g.uniform(20e-9, 80e-9), g.uniform(4e-3, 9e-3), seed};
    const auto p = generate_profile(spec, 128, 0.3e-3);
    ASSERT_EQ(p.n_elements(), 128u);
    const double mean = std::accumulate(p.delays.begin(), p.delays.end(), 0.0) / 128.0;
    double ss = 0;
    for (double v : p.delays) ss += v * v;
    EXPECT_NEAR(std::sqrt(ss / 128.0), spec.rms_target, 1e-12 * spec.rms_target);
    EXPECT_NEAR(mean, 0.0, 1e-20);
    EXPECT_NEAR(measure_rms(p) / spec.rms_target, 1.0, 1e-12);
  }
}

TEST(Profile, FwhmMatchesTargetPerSeed) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto g = abench::testing::gen(seed, 2);
    ProfileSpec spec{50e-9, g.uniform(4e-3, 9e-3), seed};
    const auto p = generate_profile(spec, 128, 0.3e-3);
    EXPECT_NEAR(reference_fwhm(p.delays, p.pitch), spec.acf_fwhm_target, 0.02 * spec.acf_fwhm_target) << seed;
  }
}

TEST(Profile, MeasureFwhmAgreesWithBruteForce) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto g = abench::testing::gen(seed, 3);
    AberrationProfile p{std::vector<double>(64), 0.25e-3};
    double acc = 0;
    for (auto& v : p.delays) v = acc = 0.8 * acc + g.normal();
    EXPECT_NEAR(measure_acf_fwhm(p), reference_fwhm(p.delays, p.pitch), 1e-12);
  }
}

TEST(Profile, AlternatingSequenceFwhm) {
  // r(1) = -(n - 1) / n, so the crossing is at lag 0.5 / (1 + (n - 1) / n).
  const std::size_t n = 10;
  AberrationProfile p{std::vector<double>(n), 1e-3};
  for (std::size_t i = 0; i < n; ++i) p.delays[i] = i % 2 ? -1.0 : 1.0;
  const double r1 = -(n - 1.0) / n;
  EXPECT_NEAR(measure_acf_fwhm(p), 2.0 * 1e-3 * 0.5 / (1.0 - r1), 1e-15);
}

TEST(Profile, DeterministicPerSeed) {
  ProfileSpec a{40e-9, 5e-3, 11}, b = a;
  EXPECT_EQ(generate_profile(a, 128, 0.3e-3).delays, generate_profile(b, 128, 0.3e-3).delays);
  b.seed = 12;
  EXPECT_NE(generate_profile(a, 128, 0.3e-3).delays, generate_profile(b, 128, 0.3e-3).delays);
}

TEST(Profile, ZeroRmsGivesZeroProfile) {
  const auto p = generate_profile({0.0, 6e-3, 1}, 128, 0.3e-3);
  for (double v : p.delays) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(measure_acf_fwhm(p), DataError);
}

TEST(Profile, RangesAreEnforcedUnlessAllowed) {
  EXPECT_THROW(generate_profile({10e-9, 6e-3, 1}, 128, 0.3e-3), RangeError);
  EXPECT_THROW(generate_profile({90e-9, 6e-3, 1}, 128, 0.3e-3), RangeError);
  EXPECT_THROW(generate_profile({50e-9, 3e-3, 1}, 128, 0.3e-3), RangeError);
  EXPECT_THROW(generate_profile({50e-9, 10e-3, 1}, 128, 0.3e-3), RangeError);
  EXPECT_THROW(generate_profile({-1e-9, 6e-3, 1}, 128, 0.3e-3), RangeError);
  EXPECT_THROW(generate_profile({50e-9, 6e-3, 1}, 1, 0.3e-3), RangeError);
  EXPECT_THROW(generate_profile({50e-9, 6e-3, 1}, 128, 0.0), RangeError);
  const auto p = generate_profile({100e-9, 6e-3, 1, true}, 128, 0.3e-3);
  EXPECT_NEAR(measure_rms(p), 100e-9, 1e-18);
}

TEST(Profile, BoundaryValuesAccepted) {
  for (double rms : {20e-9, 80e-9})
    for (double fwhm : {4e-3, 9e-3}) EXPECT_NO_THROW(generate_profile({rms, fwhm, 3}, 128, 0.3e-3));
}

TEST(Profile, ShortArraysSkipFwhmMatching) {
  const auto p = generate_profile({50e-9, 6e-3, 5}, 4, 0.3e-3);
  EXPECT_NEAR(measure_rms(p), 50e-9, 1e-18);
  EXPECT_THROW(measure_acf_fwhm(p), RangeError);
}

TEST(Profile, ValidateRejectsNonFinite) {
  AberrationProfile p{{0.0, NAN}, 0.3e-3};
  EXPECT_THROW(p.validate(), RangeError);
}
