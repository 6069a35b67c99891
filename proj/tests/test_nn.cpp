// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include <gtest/gtest.h>

#include "abench/nn/adam.hpp"
#include "abench/nn/layers.hpp"
#include "abench/nn/unet.hpp"
#include "support.hpp"

using namespace abench;
using namespace abench::nn;

namespace {

template <typename T>
FeatureMap<T> random_map(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed) {
  auto g = abench::testing::gen(seed, 11);
  FeatureMap<T> f(c, h, w);
  for (auto& v : f.v) v = static_cast<T>(g.normal());
  return f;
}

}  // namespace

TEST(Layers, Conv3x3MatchesDirectConvolution) {
  std::vector<Param<double>> p(2);
  Conv3x3<double> conv{3, 4, 0, 1};
  auto g = abench::testing::gen(1);
  p[0].value.resize(4 * 27);
  p[1].value.resize(4);
  for (auto& v : p[0].value) v = g.normal();
  for (auto& v : p[1].value) v = g.normal();
  const auto x = random_map<double>(3, 5, 6, 2);
  const auto y = conv.forward(p, x, nullptr);
  for (std::size_t co = 0; co < 4; ++co)
    for (long long yy = 0; yy < 5; ++yy)
      for (long long xx = 0; xx < 6; ++xx) {
        double s = p[1].value[co];
        for (std::size_t ci = 0; ci < 3; ++ci)
          for (long long ky = 0; ky < 3; ++ky)
            for (long long kx = 0; kx < 3; ++kx) {
              const long long sy = yy + ky - 1, sx = xx + kx - 1;
              if (sy < 0 || sy >= 5 || sx < 0 || sx >= 6) continue;
              s += p[0].value[co * 27 + ci * 9 + ky * 3 + kx] * x.at(ci, sy, sx);
            }
        EXPECT_NEAR(y.at(co, yy, xx), s, 1e-12);
      }
}

TEST(Layers, MaxPoolRoutesGradientToArgmax) {
  FeatureMap<double> x(1, 2, 4);
  x.v = {1, 5, 2, 2, 3, 4, 9, 0};
  MaxPoolCache cache;
  const auto y = maxpool2x2(x, &cache);
  ASSERT_EQ(y.v.size(), 2u);
  EXPECT_EQ(y.v[0], 5);
  EXPECT_EQ(y.v[1], 9);
  FeatureMap<double> dy(1, 1, 2);
  dy.v = {1.5, -2};
  const auto dx = maxpool2x2_backward(cache, dy);
  EXPECT_EQ(dx.v, (std::vector<double>{0, 1.5, 0, 0, 0, 0, -2, 0}));
}

TEST(Layers, UpConvPlacesEachTapInItsQuadrant) {
  std::vector<Param<double>> p(2);
  UpConv2x2<double> up{1, 1, 0, 1};
  p[0].value = {1, 2, 3, 4};
  p[1].value = {0.5};
  FeatureMap<double> x(1, 1, 1);
  x.v = {2};
  const auto y = up.forward(p, x);
  EXPECT_EQ(y.v, (std::vector<double>{2.5, 4.5, 6.5, 8.5}));
}

TEST(Layers, ConcatAndSplitAreInverse) {
  const auto a = random_map<float>(2, 3, 4, 3), b = random_map<float>(3, 3, 4, 4);
  const auto c = concat_channels(a, b);
  FeatureMap<float> a2, b2;
  split_channels(c, 2, a2, b2);
  EXPECT_EQ(a2.v, a.v);
  EXPECT_EQ(b2.v, b.v);
  EXPECT_THROW(concat_channels(a, random_map<float>(1, 2, 4, 5)), ShapeError);
}

TEST(UNet, DefaultSizeAndShapes) {
  UNet<float> net;
  EXPECT_EQ(net.parameter_count(), 116753u);
  const auto y = net.forward(random_map<float>(1, 16, 24, 6));
  EXPECT_EQ(y.c, 1u);
  EXPECT_EQ(y.h, 16u);
  EXPECT_EQ(y.w, 24u);
  for (float v : y.v) {
    EXPECT_GT(v, 0.0f);
    EXPECT_LT(v, 1.0f);
  }
  EXPECT_THROW(net.forward(random_map<float>(1, 10, 24, 7)), ShapeError);
  EXPECT_THROW(net.forward(random_map<float>(2, 16, 24, 7)), ShapeError);
}

TEST(UNet, InitializationIsSeeded) {
  UNet<float> a(UNetConfig{}, 3), b(UNetConfig{}, 3), c(UNetConfig{}, 4);
  EXPECT_EQ(a.params()[0].value, b.params()[0].value);
  EXPECT_NE(a.params()[0].value, c.params()[0].value);
  for (const auto& p : a.params())
    if (p.shape.size() == 1)
      for (float v : p.value) EXPECT_EQ(v, 0.0f);
}

TEST(UNet, BackwardMatchesFiniteDifferences) {
  // Double precision network, random biases so every path is exercised.
  UNet<double> net(UNetConfig{3, 3}, 5);
  auto g = abench::testing::gen(9);
  for (auto& p : net.params())
    if (p.shape.size() == 1)
      for (auto& v : p.value) v = 0.1 * g.normal();
  const auto x = random_map<double>(1, 8, 8, 10);
  const auto w = random_map<double>(1, 8, 8, 11);
  auto objective = [&] {
    const auto y = net.forward(x);
    double s = 0;
    for (std::size_t i = 0; i < y.v.size(); ++i) s += w.v[i] * y.v[i];
    return s;
  };
  typename UNet<double>::Tape tape;
  net.forward(x, &tape);
  Gradients<double> grads(net.params());
  net.backward(tape, w, grads);
  double worst = 0;
  std::size_t checked = 0;
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    auto& val = net.params()[i].value;
    for (std::size_t j = 0; j < val.size(); j += 1 + val.size() / 12) {
      const double v0 = val[j], h = 1e-6;
      val[j] = v0 + h;
      const double fp = objective();
      val[j] = v0 - h;
      const double fm = objective();
      val[j] = v0;
      const double fd = (fp - fm) / (2 * h);
      const double an = grads.g[i][j];
      worst = std::max(worst, std::abs(an - fd) / std::max(1e-6, std::max(std::abs(fd), std::abs(an))));
      ++checked;
    }
  }
  EXPECT_GT(checked, 100u);
  EXPECT_LT(worst, 1e-4);
}

TEST(Adam, FirstStepsMatchHandComputation) {
  std::vector<Param<double>> p(1);
  p[0].value = {1.0, -2.0};
  Adam<double> opt(p);
  Gradients<double> g(p);
  g.g[0] = {0.5, -0.1};
  opt.step(p, g, 0.01);
  // Bias-corrected first step moves each weight by lr * sign(g).
  EXPECT_NEAR(p[0].value[0], 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(p[0].value[1], -2.0 + 0.01, 1e-9);
  g.g[0] = {0.25, 0.3};
  opt.step(p, g, 0.01);
  const double m1 = (0.9 * 0.1 * 0.5 + 0.1 * 0.25) / (1 - 0.81);
  const double v1 = (0.999 * 0.001 * 0.25 + 0.001 * 0.0625) / (1 - 0.999 * 0.999);
  EXPECT_NEAR(p[0].value[0], 0.99 - 0.01 * m1 / (std::sqrt(v1) + 1e-8), 1e-9);
  EXPECT_EQ(opt.steps(), 2u);
}

TEST(Adam, WeightDecayAddsToGradient) {
  std::vector<Param<double>> p(1);
  p[0].value = {3.0};
  Adam<double> opt(p, {0.9, 0.999, 1e-8, 0.1});
  Gradients<double> g(p);
  opt.step(p, g, 0.5);  // zero gradient: the decay term alone sets the direction
  EXPECT_NEAR(p[0].value[0], 2.5, 1e-7);
}
