// SPDX-License-Identifier: Apache-2.0
#pragma once

// Near-field phase-screen aberration profiles: one arrival-time error per
// transducer element, drawn as Gaussian-smoothed Gaussian noise.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "abench/core/errors.hpp"
#include "abench/core/rng.hpp"

namespace abench {

struct AberrationProfile {
  std::vector<double> delays;  // seconds, one per element
  double pitch = 0.3e-3;       // meters

  std::size_t n_elements() const { return delays.size(); }

  static AberrationProfile zeros(std::size_t n, double pitch) { return {std::vector<double>(n, 0.0), pitch}; }

  void validate() const {
    if (!(pitch > 0.0)) throw RangeError("AberrationProfile: pitch must be positive");
    for (double d : delays)
      if (!std::isfinite(d)) throw RangeError("AberrationProfile: non-finite delay");
  }
};

struct ProfileSpec {
  static constexpr double kRmsMin = 20e-9, kRmsMax = 80e-9;
  static constexpr double kFwhmMin = 4e-3, kFwhmMax = 9e-3;

  double rms_target = 50e-9;      // seconds
  double acf_fwhm_target = 6e-3;  // meters
  std::uint64_t seed = 0;
  bool allow_out_of_range = false;

  /// rms_target == 0 is always accepted and yields the non-aberrated profile.
  void validate() const {
    if (!std::isfinite(rms_target) || rms_target < 0.0 || !std::isfinite(acf_fwhm_target) ||
        acf_fwhm_target <= 0.0)
      throw RangeError("ProfileSpec: rms and fwhm must be finite, rms >= 0, fwhm > 0");
    if (allow_out_of_range) return;
    if (rms_target != 0.0 && (rms_target < kRmsMin || rms_target > kRmsMax))
      throw RangeError("ProfileSpec: rms_target " + std::to_string(rms_target * 1e9) +
                       " ns outside [20, 80] ns");
    if (acf_fwhm_target < kFwhmMin || acf_fwhm_target > kFwhmMax)
      throw RangeError("ProfileSpec: acf_fwhm_target " + std::to_string(acf_fwhm_target * 1e3) +
                       " mm outside [4, 9] mm");
  }
};

inline double measure_rms(const AberrationProfile& p) {
  if (p.delays.empty()) return 0.0;
  double s = 0.0;
  for (double d : p.delays) s += d * d;
  return std::sqrt(s / static_cast<double>(p.delays.size()));
}

/// FWHM of the normalized biased autocorrelation, in meters. The half-maximum
/// crossing is located by linear interpolation between integer lags.
inline double measure_acf_fwhm(const AberrationProfile& p) {
  const std::size_t n = p.delays.size();
  if (n < 8) throw RangeError("measure_acf_fwhm: need at least 8 elements");
  const auto& d = p.delays;
  auto acf = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += d[i] * d[i + lag];
    return s / static_cast<double>(n);
  };
  const double r0 = acf(0);
  if (!(r0 > 0.0)) throw DataError("measure_acf_fwhm: undefined for an all-zero profile");
  double prev = 1.0;
  for (std::size_t lag = 1; lag < n; ++lag) {
    const double r = acf(lag) / r0;
    if (r < 0.5) {
      const double half_lag = static_cast<double>(lag - 1) + (prev - 0.5) / (prev - r);
      return 2.0 * half_lag * p.pitch;
    }
    prev = r;
  }
  throw DataError("measure_acf_fwhm: autocorrelation never falls below half maximum");
}

namespace detail {

/// Reflect an index into [0, n) (half-sample symmetric: -1 -> 0, n -> n-1).
inline std::size_t reflect_index(long long i, std::size_t n) {
  const long long period = 2 * static_cast<long long>(n);
  long long k = i % period;
  if (k < 0) k += period;
  return static_cast<std::size_t>(k < static_cast<long long>(n) ? k : period - 1 - k);
}

/// "Same"-size convolution with a unit-peak Gaussian of standard deviation
/// sigma_elems (in elements), reflective boundary.
inline std::vector<double> gaussian_smooth(const std::vector<double>& x, double sigma_elems) {
  const std::size_t n = x.size();
  const long long half = static_cast<long long>(std::ceil(4.0 * sigma_elems));
  std::vector<double> kernel(static_cast<std::size_t>(2 * half + 1));
  for (long long k = -half; k <= half; ++k)
    kernel[static_cast<std::size_t>(k + half)] = std::exp(-0.5 * (k * k) / (sigma_elems * sigma_elems));
  std::vector<double> y(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (long long k = -half; k <= half; ++k)
      s += kernel[static_cast<std::size_t>(k + half)] *
           x[reflect_index(static_cast<long long>(i) - k, n)];
    y[i] = s;
  }
  return y;
}

inline void remove_mean(std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  for (double& x : v) x -= m;
}

}  // namespace detail

/// Random profile with exact RMS and (for n >= 8) an autocorrelation FWHM
/// matched to the target. The smoothing width is found by bisection on the
/// realized FWHM of this seed's noise, starting from the ideal relation
/// FWHM_acf = 2 sqrt(2 ln 2) * sqrt(2) * sigma_kernel.
inline AberrationProfile generate_profile(const ProfileSpec& spec, std::size_t n_elements, double pitch) {
  spec.validate();
  if (n_elements < 2) throw RangeError("generate_profile: need at least 2 elements");
  if (!(pitch > 0.0)) throw RangeError("generate_profile: pitch must be positive");

  AberrationProfile out{std::vector<double>(n_elements, 0.0), pitch};
  if (spec.rms_target == 0.0) return out;

  CounterRng rng = CounterRng::stream(spec.seed, /*purpose=*/0x70726f66 /* "prof" */);
  std::vector<double> noise(n_elements);
  for (double& v : noise) v = rng.normal();

  auto shaped = [&](double sigma_elems) {
    AberrationProfile p{detail::gaussian_smooth(noise, sigma_elems), pitch};
    detail::remove_mean(p.delays);
    return p;
  };

  const double fwhm_per_sigma = 2.0 * std::sqrt(2.0 * std::numbers::ln2) * std::numbers::sqrt2;
  const double sigma0 = spec.acf_fwhm_target / pitch / fwhm_per_sigma;
  double sigma = sigma0;

  if (n_elements >= 8) {
    auto err = [&](double s) -> double {
      try {
        return measure_acf_fwhm(shaped(s)) - spec.acf_fwhm_target;
      } catch (const DataError&) {
        return +1.0;  // FWHM wider than the array: treat as too wide
      }
    };
    double lo = 0.2 * sigma0, hi = 5.0 * sigma0;
    double e_lo = err(lo), e_hi = err(hi);
    if (e_lo < 0.0 && e_hi > 0.0) {
      for (int it = 0; it < 60 && hi - lo > 1e-9 * sigma0; ++it) {
        const double mid = 0.5 * (lo + hi);
        (err(mid) < 0.0 ? lo : hi) = mid;
      }
      sigma = 0.5 * (lo + hi);
    }
  }

  out = shaped(sigma);
  const double rms = measure_rms(out);
  if (!(rms > 0.0)) return AberrationProfile::zeros(n_elements, pitch);
  const double scale = spec.rms_target / rms;
  for (double& d : out.delays) d *= scale;
  return out;
}

}  // namespace abench
