// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "abench/core/array.hpp"
#include "abench/core/hilbert.hpp"
#include "abench/core/parallel.hpp"
#include "abench/core/rng.hpp"
#include "abench/core/tensor_io.hpp"
#include "support.hpp"

using namespace abench;
using abench::testing::TempDir;

TEST(Rng, StreamsAreDeterministicAndDistinct) {
  auto a = CounterRng::stream(7, 1, 0), b = CounterRng::stream(7, 1, 0);
  auto c = CounterRng::stream(7, 1, 1), d = CounterRng::stream(7, 2, 0), e = CounterRng::stream(8, 1, 0);
  const auto first = a.next_u64();
  EXPECT_EQ(first, b.next_u64());
  EXPECT_NE(first, c.next_u64());
  EXPECT_NE(first, d.next_u64());
  EXPECT_NE(first, e.next_u64());
}

TEST(Rng, UniformMomentsAndRange) {
  auto r = CounterRng::stream(1, 2);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    s += u;
    s2 += u * u;
  }
  EXPECT_NEAR(s / n, 0.5, 0.005);
  EXPECT_NEAR(s2 / n - (s / n) * (s / n), 1.0 / 12.0, 0.002);
}

TEST(Rng, NormalMoments) {
  auto r = CounterRng::stream(3, 4);
  double s = 0, s2 = 0, s4 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
    s4 += x * x * x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.015);
  EXPECT_NEAR(s4 / n, 3.0, 0.08);
}

TEST(Rng, BelowCoversRangeUniformly) {
  auto r = CounterRng::stream(5, 6);
  std::vector<int> hist(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const auto k = r.below(7);
    ASSERT_LT(k, 7u);
    ++hist[k];
  }
  for (int h : hist) EXPECT_NEAR(h, 10000, 400);
}

TEST(Array, RowMajorIndexingAndRows) {
  Array3D<int> a({2, 3, 4});
  for (std::size_t i = 0; i < a.size(); ++i) a.flat()[i] = static_cast<int>(i);
  EXPECT_EQ(a(1, 2, 3), 23);
  EXPECT_EQ(a(0, 1, 0), 4);
  auto r = a.row(1, 1);
  ASSERT_EQ(r.size(), 4u);
  EXPECT_EQ(r[0], 16);
}

TEST(Array, ConstructorRejectsWrongSize) {
  EXPECT_THROW((Array2D<double>({2, 2}, std::vector<double>(3))), ShapeError);
}

TEST(TensorIo, RoundTripBothDtypesWithSidecar) {
  TempDir dir("io");
  Array2D<float> f({3, 5});
  Array3D<double> d({2, 2, 2});
  for (std::size_t i = 0; i < f.size(); ++i) f.flat()[i] = 0.25f * static_cast<float>(i) - 1.0f;
  for (std::size_t i = 0; i < d.size(); ++i) d.flat()[i] = std::sqrt(static_cast<double>(i) + 0.1);
  nlohmann::json meta{{"kind", "test"}, {"n", 3}};
  save_tensor(dir / "f.tnsr", f, &meta);
  save_tensor(dir / "d.tnsr", d);
  const auto f2 = load_tensor<float, 2>(dir / "f.tnsr");
  const auto d2 = load_tensor<double, 3>(dir / "d.tnsr");
  EXPECT_EQ(f2.dims(), f.dims());
  EXPECT_EQ(f2.storage(), f.storage());
  EXPECT_EQ(d2.storage(), d.storage());
  EXPECT_EQ(load_sidecar(dir / "f.tnsr"), meta);
  EXPECT_TRUE(load_sidecar(dir / "d.tnsr").empty());
  EXPECT_EQ(content_hash(f2), content_hash(f));
}

TEST(TensorIo, RejectsCorruptFiles) {
  TempDir dir("io_bad");
  { std::ofstream(dir / "bad.tnsr") << "not a tensor"; }
  EXPECT_THROW(load_raw_tensor(dir / "bad.tnsr"), DataError);
  Array1D<float> a({100}, 1.0f);
  std::ostringstream os;
  write_tensor(os, a);
  std::istringstream truncated(os.str().substr(0, 50));
  EXPECT_THROW(read_raw_tensor(truncated), DataError);
  save_tensor(dir / "a.tnsr", a);
  EXPECT_THROW((load_tensor<float, 2>(dir / "a.tnsr")), ShapeError);
  EXPECT_THROW(load_raw_tensor(dir / "missing.tnsr"), IoError);
}

TEST(Hilbert, CosineMapsToSine) {
  const std::size_t n = 256;
  std::vector<double> x(n), want(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double ph = 2 * std::numbers::pi * 9.0 * static_cast<double>(i) / static_cast<double>(n);
    x[i] = std::cos(ph);
    want[i] = std::sin(ph);
  }
  const auto h = hilbert(x);
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(h[i], want[i], 1e-12);
}

TEST(Hilbert, OddLengthAndDcAreHandled) {
  std::vector<double> dc(17, 3.0);
  for (double v : hilbert(dc)) EXPECT_NEAR(v, 0.0, 1e-12);
  std::vector<double> one{2.0};
  EXPECT_EQ(hilbert(one)[0], 0.0);
}

TEST(Hilbert, AdjointIsNegative) {
  // <H x, y> = -<x, H y> for random x, y (property over several lengths).
  for (std::size_t n : {8u, 15u, 64u, 101u}) {
    auto r = abench::testing::gen(n);
    std::vector<double> x(n), y(n);
    for (auto& v : x) v = r.normal();
    for (auto& v : y) v = r.normal();
    const auto hx = hilbert(x), hy = hilbert(y);
    double a = 0, b = 0;
    for (std::size_t i = 0; i < n; ++i) {
      a += hx[i] * y[i];
      b += x[i] * hy[i];
    }
    EXPECT_NEAR(a, -b, 1e-10) << "n = " << n;
  }
}

TEST(Parallel, VisitsEveryIndexOnceAndPropagatesErrors) {
  set_max_threads(4);
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(0, hits.size(), [&](std::size_t i) { hits[i]++; });
  for (auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(0, 10, [](std::size_t i) {
                 if (i == 7) throw DataError("boom");
               }),
               DataError);
  set_max_threads(0);
}

TEST(Parallel, ThreadCapOverridesEnvironment) {
  set_max_threads(3);
  EXPECT_EQ(max_threads(), 3);
  set_max_threads(0);
  EXPECT_GE(max_threads(), 1);
}
