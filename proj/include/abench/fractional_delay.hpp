// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <span>

namespace abench {

/// 8-tap Kaiser-windowed sinc interpolator. For a fractional read position
/// x, taps cover floor(x) - 3 ... floor(x) + 4.
struct KaiserSinc8 {
  static constexpr int kTaps = 8;
  static constexpr int kLeft = 3;
  static constexpr double kBeta = 4.0;

  /// Weights for reading at integer base floor(x) with fractional part frac.
  static std::array<double, kTaps> weights(double frac) {
    std::array<double, kTaps> w{};
    const double i0b = std::cyl_bessel_i(0.0, kBeta);
    double sum = 0;
    for (int j = 0; j < kTaps; ++j) {
      const double d = frac - static_cast<double>(j - kLeft);  // distance from tap
      const double u = d / (0.5 * kTaps);
      const double win = std::abs(u) < 1.0 ? std::cyl_bessel_i(0.0, kBeta * std::sqrt(1.0 - u * u)) / i0b : 0.0;
      const double sinc = d == 0.0 ? 1.0 : std::sin(std::numbers::pi * d) / (std::numbers::pi * d);
      w[j] = sinc * win;
      sum += w[j];
    }
    for (double& v : w) v /= sum;
    return w;
  }

  /// Band-limited read of x at fractional index pos; out-of-record taps read 0.
  template <typename T>
  static double read(std::span<const T> x, double pos) {
    const double fl = std::floor(pos);
    const auto w = weights(pos - fl);
    const long long base = static_cast<long long>(fl) - kLeft;
    double acc = 0;
    for (int j = 0; j < kTaps; ++j) {
      const long long i = base + j;
      if (i >= 0 && i < static_cast<long long>(x.size())) acc += w[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(i)];
    }
    return acc;
  }
};

/// Linear interpolation with zeros outside the record.
template <typename T>
double linear_read(std::span<const T> x, double pos) {
  const double fl = std::floor(pos);
  const long long i = static_cast<long long>(fl);
  const double f = pos - fl;
  const long long n = static_cast<long long>(x.size());
  const double a = (i >= 0 && i < n) ? static_cast<double>(x[static_cast<std::size_t>(i)]) : 0.0;
  const double b = (i + 1 >= 0 && i + 1 < n) ? static_cast<double>(x[static_cast<std::size_t>(i + 1)]) : 0.0;
  return a + f * (b - a);
}

}  // namespace abench
