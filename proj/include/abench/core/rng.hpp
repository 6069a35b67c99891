// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace abench {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Counter-based generator: the i-th draw of a stream is
/// mix64(key + (i + 1) * 0x9E3779B97F4A7C15). Any draw can be recomputed from
/// (key, i) alone, which makes sequences reproducible across languages.
///
///   uniform()  = (u64 >> 11) * 2^-53                 in [0, 1)
///   normal()   = sqrt(-2 ln(1 - u1)) * cos(2 pi u2)  consumes two draws
class CounterRng {
 public:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0) : key_(key), counter_(counter) {}

  /// Independent stream for a (seed, purpose, index) triple.
  static CounterRng stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index = 0) {
    return CounterRng(mix64(mix64(seed ^ mix64(purpose + kGamma)) + index * kGamma));
  }

  std::uint64_t next_u64() { return mix64(key_ + (++counter_) * kGamma); }

  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, n) by rejection, so there is no modulo bias.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = n ? (~std::uint64_t{0} - (~std::uint64_t{0} % n)) : 0;
    for (;;) {
      const std::uint64_t x = next_u64();
      if (x < limit) return x % n;
    }
  }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace abench
