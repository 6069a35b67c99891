// SPDX-License-Identifier: Apache-2.0
#pragma once

// Single plane-wave synthesis from full-synthetic-aperture data with a
// transmit-side phase screen: element m fires tau_a(m) late, so the
// contribution of m is read at t + tau_a(m).

#include <cmath>
#include <string>

#include "abench/aberration_profile.hpp"
#include "abench/acoustic_sim.hpp"
#include "abench/core/array.hpp"
#include "abench/core/errors.hpp"
#include "abench/core/parallel.hpp"
#include "abench/fractional_delay.hpp"

namespace abench {

/// Single-transmit channel data, data(rx element n, sample).
struct ChannelRF {
  Array2D<float> data;
  double t0 = 0;
  double sample_rate = 0;

  std::size_t n_elements() const { return data.dim(0); }
  std::size_t n_samples() const { return data.dim(1); }
};

/// RF(n, t) = sum_m RF_CH(m, n, t + tau_a(m)). Fractional reads use the
/// 8-tap Kaiser sinc at the cube's rate; samples outside the record read 0.
inline ChannelRF synthesize_planewave(const FsaCube& fsa, const AberrationProfile& profile) {
  const std::size_t ne = fsa.n_elements();
  if (profile.n_elements() != ne)
    throw ShapeError("synthesize_planewave: profile has " + std::to_string(profile.n_elements()) +
                     " elements, cube has " + std::to_string(ne));
  profile.validate();
  const std::size_t ns = fsa.n_samples();
  ChannelRF out{Array2D<float>({ne, ns}, 0.0f), fsa.t0, fsa.sample_rate};

  // Tap weights depend only on the transmit element's fractional shift.
  struct Shift {
    long long base;
    std::array<double, KaiserSinc8::kTaps> w;
    bool integer;
  };
  std::vector<Shift> shifts(ne);
  for (std::size_t m = 0; m < ne; ++m) {
    const double s = profile.delays[m] * fsa.sample_rate;
    const double fl = std::floor(s);
    Shift sh{static_cast<long long>(fl) - KaiserSinc8::kLeft, KaiserSinc8::weights(s - fl), s == fl};
    if (sh.integer) sh.base = static_cast<long long>(fl);
    shifts[m] = sh;
  }

  parallel_for(0, ne, [&](std::size_t n) {
    std::vector<double> acc(ns, 0.0);
    const auto lns = static_cast<long long>(ns);
    for (std::size_t m = 0; m < ne; ++m) {
      auto x = fsa.data.row(m, n);
      const auto& sh = shifts[m];
      if (sh.integer) {
        for (long long k = 0; k < lns; ++k) {
          const long long i = k + sh.base;
          if (i >= 0 && i < lns) acc[static_cast<std::size_t>(k)] += x[static_cast<std::size_t>(i)];
        }
        continue;
      }
      for (long long k = 0; k < lns; ++k) {
        const long long b = k + sh.base;
        double v = 0;
        if (b >= 0 && b + KaiserSinc8::kTaps <= lns) {
          for (int j = 0; j < KaiserSinc8::kTaps; ++j) v += sh.w[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(b + j)];
        } else {
          for (int j = 0; j < KaiserSinc8::kTaps; ++j) {
            const long long i = b + j;
            if (i >= 0 && i < lns) v += sh.w[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(i)];
          }
        }
        acc[static_cast<std::size_t>(k)] += v;
      }
    }
    auto dst = out.data.row(n);
    for (std::size_t k = 0; k < ns; ++k) dst[k] = static_cast<float>(acc[k]);
  });
  return out;
}

}  // namespace abench
