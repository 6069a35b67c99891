// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fftw3.h>

#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "abench/core/errors.hpp"

namespace abench {

namespace detail {

struct FftwBuffer {
  fftw_complex* p = nullptr;
  explicit FftwBuffer(std::size_t n) : p(fftw_alloc_complex(n)) {
    if (!p) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(p); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
};

/// Forward/backward plans per length. Planning is serialized; executing a
/// cached plan on fresh fftw_alloc'd buffers is thread-safe.
class FftPlanCache {
 public:
  struct Plans {
    fftw_plan forward;
    fftw_plan backward;
  };

  static FftPlanCache& instance() {
    static FftPlanCache cache;
    return cache;
  }

  Plans get(std::size_t n) {
    std::lock_guard lock(mutex_);
    auto it = plans_.find(n);
    if (it != plans_.end()) return it->second;
    FftwBuffer a(n), b(n);
    const int ni = static_cast<int>(n);
    Plans p{fftw_plan_dft_1d(ni, a.p, b.p, FFTW_FORWARD, FFTW_ESTIMATE),
            fftw_plan_dft_1d(ni, a.p, b.p, FFTW_BACKWARD, FFTW_ESTIMATE)};
    plans_.emplace(n, p);
    return p;
  }

  ~FftPlanCache() {
    for (auto& [n, p] : plans_) {
      fftw_destroy_plan(p.forward);
      fftw_destroy_plan(p.backward);
    }
  }

 private:
  std::mutex mutex_;
  std::map<std::size_t, Plans> plans_;
};

}  // namespace detail

/// Discrete Hilbert transform (imaginary part of the FFT analytic signal).
/// The operator is real and antisymmetric, so its adjoint is -hilbert.
inline void hilbert(std::span<const double> x, std::span<double> out) {
  const std::size_t n = x.size();
  if (out.size() != n) throw ShapeError("hilbert: output length mismatch");
  if (n == 0) return;
  if (n == 1) {
    out[0] = 0;
    return;
  }
  const auto plans = detail::FftPlanCache::instance().get(n);
  detail::FftwBuffer a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a.p[i][0] = x[i];
    a.p[i][1] = 0;
  }
  fftw_execute_dft(plans.forward, a.p, b.p);
  // Analytic-signal weights: 1 at DC (and Nyquist for even n), 2 for positive
  // frequencies, 0 for negative ones.
  const std::size_t half = n / 2;
  for (std::size_t k = 0; k < n; ++k) {
    double g;
    if (k == 0 || (n % 2 == 0 && k == half)) g = 1.0;
    else if (k < (n + 1) / 2) g = 2.0;
    else g = 0.0;
    b.p[k][0] *= g;
    b.p[k][1] *= g;
  }
  fftw_execute_dft(plans.backward, b.p, a.p);
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a.p[i][1] * inv;
}

inline std::vector<double> hilbert(std::span<const double> x) {
  std::vector<double> out(x.size());
  hilbert(x, out);
  return out;
}

}  // namespace abench
