// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "abench/fractional_delay.hpp"
#include "abench/wavefront_synthesis.hpp"
#include "support.hpp"

using namespace abench;

namespace {

FsaCube random_cube(std::size_t ne, std::size_t ns, std::uint64_t seed) {
  auto g = abench::testing::gen(seed);
  FsaCube c{Array3D<float>({ne, ne, ns}), 1e-6, 20e6, {}};
  c.xducer.n_elements = ne;
  for (auto& v : c.data.flat()) v = static_cast<float>(g.normal());
  return c;
}

}  // namespace

TEST(KaiserSinc, WeightsAreNormalizedAndExactAtIntegers) {
  for (double f : {0.0, 0.1, 0.37, 0.5, 0.99}) {
    const auto w = KaiserSinc8::weights(f);
    double s = 0;
    for (double v : w) s += v;
    EXPECT_NEAR(s, 1.0, 1e-14);
  }
  const auto w0 = KaiserSinc8::weights(0.0);
  for (int j = 0; j < 8; ++j) EXPECT_NEAR(w0[j], j == KaiserSinc8::kLeft ? 1.0 : 0.0, 1e-15);
}

TEST(KaiserSinc, WeightsAreMirrorSymmetric) {
  // Reading at frac f from the left equals reading at 1 - f from the right.
  for (double f : {0.13, 0.25, 0.5, 0.8}) {
    const auto a = KaiserSinc8::weights(f), b = KaiserSinc8::weights(1.0 - f);
    for (int j = 0; j < 8; ++j) EXPECT_NEAR(a[j], b[7 - j], 1e-14);
  }
}

TEST(KaiserSinc, ReadsBandLimitedSinusoid) {
  // A sinusoid at 0.25 cycles/sample (the RF band at the low rate) is
  // reconstructed between samples to well under 1 %.
  const double f = 0.25;
  std::vector<double> x(200);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::cos(2 * std::numbers::pi * f * i + 0.3);
  double worst = 0;
  for (double pos = 50.0; pos < 150.0; pos += 0.173) {
    const double want = std::cos(2 * std::numbers::pi * f * pos + 0.3);
    worst = std::max(worst, std::abs(KaiserSinc8::read(std::span<const double>(x), pos) - want));
  }
  EXPECT_LT(worst, 5e-3);
}

TEST(LinearRead, InterpolatesAndZeroPads) {
  std::vector<float> x{1.0f, 3.0f, -1.0f};
  EXPECT_DOUBLE_EQ(linear_read(std::span<const float>(x), 0.5), 2.0);
  EXPECT_DOUBLE_EQ(linear_read(std::span<const float>(x), 1.25), 2.0);
  EXPECT_DOUBLE_EQ(linear_read(std::span<const float>(x), 2.5), -0.5);
  EXPECT_DOUBLE_EQ(linear_read(std::span<const float>(x), -0.5), 0.5);
  EXPECT_DOUBLE_EQ(linear_read(std::span<const float>(x), 5.0), 0.0);
}

TEST(Synthesis, ZeroProfileSumsOverTransmitters) {
  const auto cube = random_cube(6, 40, 1);
  const auto ch = synthesize_planewave(cube, AberrationProfile::zeros(6, 0.3e-3));
  EXPECT_DOUBLE_EQ(ch.t0, cube.t0);
  EXPECT_DOUBLE_EQ(ch.sample_rate, cube.sample_rate);
  for (std::size_t n = 0; n < 6; ++n)
    for (std::size_t k = 0; k < 40; ++k) {
      double s = 0;
      for (std::size_t m = 0; m < 6; ++m) s += cube.data(m, n, k);
      EXPECT_NEAR(ch.data(n, k), s, 1e-5);
    }
}

TEST(Synthesis, IntegerDelaysShiftTraces) {
  const auto cube = random_cube(5, 50, 2);
  AberrationProfile p{{0, 2, -3, 1, 7}, 0.3e-3};
  for (auto& d : p.delays) d /= cube.sample_rate;
  const auto ch = synthesize_planewave(cube, p);
  for (std::size_t n = 0; n < 5; ++n)
    for (long long k = 0; k < 50; ++k) {
      double s = 0;
      for (std::size_t m = 0; m < 5; ++m) {
        const long long i = k + std::llround(p.delays[m] * cube.sample_rate);
        if (i >= 0 && i < 50) s += cube.data(m, n, static_cast<std::size_t>(i));
      }
      EXPECT_NEAR(ch.data(n, static_cast<std::size_t>(k)), s, 1e-5);
    }
}

TEST(Synthesis, FractionalDelayMatchesKaiserRead) {
  const auto cube = random_cube(4, 64, 3);
  auto g = abench::testing::gen(3, 9);
  AberrationProfile p{std::vector<double>(4), 0.3e-3};
  for (auto& d : p.delays) d = g.uniform(-80e-9, 80e-9);
  const auto ch = synthesize_planewave(cube, p);
  for (std::size_t n = 0; n < 4; ++n)
    for (std::size_t k = 0; k < 64; ++k) {
      double s = 0;
      for (std::size_t m = 0; m < 4; ++m)
        s += KaiserSinc8::read(cube.data.row(m, n), static_cast<double>(k) + p.delays[m] * cube.sample_rate);
      EXPECT_NEAR(ch.data(n, k), s, 1e-5);
    }
}

TEST(Synthesis, LinearInCube) {
  auto a = random_cube(4, 30, 4), b = random_cube(4, 30, 5);
  FsaCube sum = a;
  for (std::size_t i = 0; i < sum.data.size(); ++i) sum.data.flat()[i] = a.data.flat()[i] - 2.0f * b.data.flat()[i];
  AberrationProfile p{{10e-9, -25e-9, 40e-9, 0.0}, 0.3e-3};
  const auto ca = synthesize_planewave(a, p), cb = synthesize_planewave(b, p), cs = synthesize_planewave(sum, p);
  for (std::size_t i = 0; i < cs.data.size(); ++i)
    EXPECT_NEAR(cs.data.flat()[i], ca.data.flat()[i] - 2.0 * cb.data.flat()[i], 1e-4);
}

TEST(Synthesis, ProfileLengthMismatchThrows) {
  const auto cube = random_cube(4, 10, 6);
  EXPECT_THROW(synthesize_planewave(cube, AberrationProfile::zeros(5, 0.3e-3)), ShapeError);
}
