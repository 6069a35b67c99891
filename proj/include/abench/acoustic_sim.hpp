// SPDX-License-Identifier: Apache-2.0
#pragma once

// Point-scatterer full-synthetic-aperture simulator: ideal point elements,
// linear lossless propagation, spherical spreading with a soft floor, and a
// Gaussian-windowed sinusoidal pulse. Traces are formed at the high sample
// rate and decimated with a fixed anti-alias FIR; the default path evaluates
// that same filtered pulse in closed form directly on the low-rate grid.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <variant>
#include <vector>

#include "abench/core/array.hpp"
#include "abench/core/errors.hpp"
#include "abench/core/parallel.hpp"
#include "abench/core/rng.hpp"

namespace abench {

struct TransducerSpec {
  std::size_t n_elements = 128;
  double pitch = 0.3e-3;              // m
  double center_freq = 5.208e6;       // Hz
  double sample_rate_hi = 104.16e6;   // Hz
  double sample_rate_lo = 20.832e6;   // Hz
  double pulse_cycles = 2.5;          // envelope width at -20 dB, in periods
  double sound_speed_nominal = 1540;  // m/s

  std::size_t decimation() const {
    return static_cast<std::size_t>(std::lround(sample_rate_hi / sample_rate_lo));
  }

  double element_x(std::size_t n) const {
    return (static_cast<double>(n) - 0.5 * static_cast<double>(n_elements - 1)) * pitch;
  }

  double wavelength() const { return sound_speed_nominal / center_freq; }

  /// Standard deviation of the Gaussian pulse envelope, seconds.
  double pulse_sigma() const {
    return pulse_cycles / (center_freq * 2.0 * std::sqrt(2.0 * std::log(10.0)));
  }

  void validate() const {
    if (n_elements < 2) throw RangeError("TransducerSpec: need at least 2 elements");
    if (!(pitch > 0 && center_freq > 0 && sample_rate_lo > 0 && sample_rate_hi > 0 &&
          pulse_cycles > 0 && sound_speed_nominal > 0))
      throw RangeError("TransducerSpec: all physical parameters must be positive");
    const double ratio = sample_rate_hi / sample_rate_lo;
    if (ratio < 1.0 || std::abs(ratio - std::round(ratio)) > 1e-9 * ratio)
      throw RangeError("TransducerSpec: sample_rate_hi must be an integer multiple of sample_rate_lo");
    if (!(center_freq < 0.5 * sample_rate_lo))
      throw RangeError("TransducerSpec: center frequency must be below the low-rate Nyquist");
  }
};

struct Scatterer {
  double x = 0, z = 0, amplitude = 0;
};

struct ScattererPhantom {
  std::vector<Scatterer> scatterers;
  double x_min = -22.5e-3, x_max = 22.5e-3;  // lateral extent, m
  double z_min = 10e-3, z_max = 50e-3;       // depth extent, m
  double sound_speed = 1540;

  double width() const { return x_max - x_min; }
  double height() const { return z_max - z_min; }

  /// Scatterers must lie strictly in front of the array (z > 0), which also
  /// excludes zero distance to any element.
  void validate() const {
    if (!(sound_speed > 0)) throw RangeError("ScattererPhantom: sound speed must be positive");
    for (const auto& s : scatterers) {
      if (!std::isfinite(s.x) || !std::isfinite(s.z) || !std::isfinite(s.amplitude))
        throw RangeError("ScattererPhantom: non-finite scatterer");
      if (!(s.z > 0)) throw RangeError("ScattererPhantom: scatterer at or behind the array plane");
    }
  }
};

/// Full-synthetic-aperture channel data, data(tx m, rx n, sample).
struct FsaCube {
  Array3D<float> data;
  double t0 = 0;
  double sample_rate = 0;
  TransducerSpec xducer;

  std::size_t n_elements() const { return data.dim(0); }
  std::size_t n_samples() const { return data.dim(2); }
};

// ---------------------------------------------------------------- phantoms --

struct Disc {
  double cx, cz, r;
  bool contains(double x, double z) const { return (x - cx) * (x - cx) + (z - cz) * (z - cz) <= r * r; }
};

struct Ellipse {
  double cx, cz, rx, rz, angle;
  bool contains(double x, double z) const {
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = c * (x - cx) + s * (z - cz);
    const double v = -s * (x - cx) + c * (z - cz);
    return (u * u) / (rx * rx) + (v * v) / (rz * rz) <= 1.0;
  }
};

/// Star-shaped blob: r(theta) = r0 * (1 + sum_k a_k cos(k theta + phi_k)).
struct Blob {
  double cx, cz, r0;
  std::vector<double> amp, phase;  // harmonics k = 2, 3, ...
  bool contains(double x, double z) const {
    const double dx = x - cx, dz = z - cz;
    const double th = std::atan2(dz, dx);
    double r = 1.0;
    for (std::size_t k = 0; k < amp.size(); ++k)
      r += amp[k] * std::cos(static_cast<double>(k + 2) * th + phase[k]);
    return std::hypot(dx, dz) <= r0 * r;
  }
};

using InclusionShape = std::variant<Disc, Ellipse, Blob>;

struct Inclusion {
  InclusionShape shape;
  double echogenicity_db = 0;  // -infinity for anechoic

  bool contains(double x, double z) const {
    return std::visit([&](const auto& s) { return s.contains(x, z); }, shape);
  }
  double amplitude_factor() const {
    return std::isinf(echogenicity_db) && echogenicity_db < 0 ? 0.0 : std::pow(10.0, echogenicity_db / 20.0);
  }
};

struct PhantomRegion {
  double x_min = -22.5e-3, x_max = 22.5e-3;
  double z_min = 10e-3, z_max = 50e-3;
  double sound_speed = 1540;
};

/// Default scatterer density, per mm^2. A resolution cell here is taken as
/// (lambda * f_number) x (c * tau_-6dB / 2) ~ 0.52 mm x 0.20 mm for the
/// default probe at f-number 1.75, so 115 / mm^2 is ~12 scatterers per cell.
inline constexpr double kDefaultDensityPerMm2 = 115.0;

/// Uniformly placed scatterers with N(0, 1) amplitudes. Inside an inclusion
/// (first match wins) amplitudes are scaled by 10^(dB/20).
inline ScattererPhantom make_speckle_phantom(const PhantomRegion& region, double density_per_mm2,
                                             const std::vector<Inclusion>& inclusions, std::uint64_t seed) {
  if (!(density_per_mm2 >= 0.0) || !std::isfinite(density_per_mm2))
    throw RangeError("make_speckle_phantom: density must be non-negative");
  if (!(region.x_max > region.x_min && region.z_max > region.z_min && region.z_min > 0))
    throw RangeError("make_speckle_phantom: bad region");
  ScattererPhantom ph;
  ph.x_min = region.x_min;
  ph.x_max = region.x_max;
  ph.z_min = region.z_min;
  ph.z_max = region.z_max;
  ph.sound_speed = region.sound_speed;
  const double area_mm2 = ph.width() * ph.height() * 1e6;
  const auto count = static_cast<std::size_t>(std::llround(density_per_mm2 * area_mm2));
  CounterRng rng = CounterRng::stream(seed, 0x7068616e /* "phan" */);
  ph.scatterers.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Scatterer s;
    s.x = rng.uniform(region.x_min, region.x_max);
    s.z = rng.uniform(region.z_min, region.z_max);
    if (s.z <= 0) s.z = region.z_min;
    s.amplitude = rng.normal();
    for (const auto& inc : inclusions) {
      if (inc.contains(s.x, s.z)) {
        s.amplitude *= inc.amplitude_factor();
        break;
      }
    }
    ph.scatterers.push_back(s);
  }
  ph.validate();
  return ph;
}

struct CystGeometry {
  Disc top{0.0, 20e-3, 5e-3};
  Disc bottom{0.0, 38e-3, 7.5e-3};
};

/// 45 x 40 mm speckle phantom from 10 mm depth with two anechoic cysts
/// (diameters 10 and 15 mm) on the center line, 10 and 28 mm below the
/// phantom's top edge.
inline ScattererPhantom make_cyst_test_phantom(std::uint64_t seed,
                                               double density_per_mm2 = kDefaultDensityPerMm2) {
  const CystGeometry g;
  const double anechoic = -std::numeric_limits<double>::infinity();
  return make_speckle_phantom(PhantomRegion{}, density_per_mm2,
                              {Inclusion{g.top, anechoic}, Inclusion{g.bottom, anechoic}}, seed);
}

/// Procedural stand-in for mask-derived training phantoms: a handful of
/// random blobs/ellipses that are anechoic, hypoechoic or hyperechoic.
inline std::vector<Inclusion> random_inclusions(std::uint64_t seed, const PhantomRegion& region,
                                                std::size_t count) {
  CounterRng rng = CounterRng::stream(seed, 0x6d61736b /* "mask" */);
  std::vector<Inclusion> out;
  for (std::size_t i = 0; i < count; ++i) {
    const double cx = rng.uniform(region.x_min + 4e-3, region.x_max - 4e-3);
    const double cz = rng.uniform(region.z_min + 4e-3, region.z_max - 4e-3);
    const double r = rng.uniform(2.5e-3, 8e-3);
    const double kind = rng.uniform();
    double db;
    if (kind < 1.0 / 3.0) db = -std::numeric_limits<double>::infinity();
    else if (kind < 2.0 / 3.0) db = rng.uniform(-20.0, -3.0);
    else db = rng.uniform(3.0, 12.0);
    if (rng.uniform() < 0.5) {
      out.push_back({Ellipse{cx, cz, r, r * rng.uniform(0.5, 1.5), rng.uniform(0, std::numbers::pi)}, db});
    } else {
      Blob b{cx, cz, r, {}, {}};
      for (int k = 0; k < 3; ++k) {
        b.amp.push_back(rng.uniform(0.0, 0.25));
        b.phase.push_back(rng.uniform(0.0, 2 * std::numbers::pi));
      }
      out.push_back({std::move(b), db});
    }
  }
  return out;
}

// -------------------------------------------------------------- simulation --

/// Per-element angular weighting at the center frequency. `cosine` is the
/// obliquity factor z / d; `element_width` multiplies it by the far-field
/// pattern of a rigid-baffled strip, sinc(pi w sin(theta) / lambda).
enum class Directivity { none, cosine, element_width };

struct SimOptions {
  double record_duration = 75e-6;  // s, starting at t0 = 0
  double spreading_floor = 1e-4;   // m, soft floor d0 in 1/sqrt(d^2 + d0^2)
  Directivity directivity = Directivity::element_width;
  double element_width = 0.27e-3;  // m, used by Directivity::element_width
  bool high_rate_output = false;   // keep the brute-force high-rate cube
  bool allow_empty = true;
};

inline double pulse(double t, double f0, double sigma) {
  return std::exp(-0.5 * t * t / (sigma * sigma)) * std::cos(2.0 * std::numbers::pi * f0 * t);
}

/// Anti-alias low-pass for decimation by `factor`: Hamming-windowed sinc with
/// 12*factor + 1 taps, cutoff 0.45 * (output rate), unit DC gain.
inline std::vector<double> decimation_filter(std::size_t factor) {
  const std::size_t half = 6 * factor;
  const double fc = 0.45 / static_cast<double>(factor);  // cycles per input sample
  std::vector<double> h(2 * half + 1);
  double sum = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double k = static_cast<double>(i) - static_cast<double>(half);
    const double x = 2.0 * fc * k;
    const double sinc = k == 0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
    const double w = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                             static_cast<double>(h.size() - 1));
    h[i] = 2.0 * fc * sinc * w;
    sum += h[i];
  }
  for (double& v : h) v /= sum;
  return h;
}

/// y[k] = sum_i h[i] x[k*factor - (i - half)], zero outside the input.
inline std::vector<float> fir_decimate(std::span<const float> x, std::size_t factor, std::size_t n_out,
                                       const std::vector<double>& h) {
  const long long half = static_cast<long long>(h.size() / 2);
  std::vector<float> y(n_out, 0.0f);
  for (std::size_t k = 0; k < n_out; ++k) {
    double acc = 0;
    const long long c = static_cast<long long>(k * factor);
    for (long long i = -half; i <= half; ++i) {
      const long long j = c - i;
      if (j >= 0 && j < static_cast<long long>(x.size())) acc += h[static_cast<std::size_t>(i + half)] * x[static_cast<std::size_t>(j)];
    }
    y[k] = static_cast<float>(acc);
  }
  return y;
}

namespace detail {

/// Decimation filter applied to the analytic pulse, q(u) = sum_i h[i] p(u - i / fs_hi),
/// tabulated phase-major: row p holds q(u_start + p / (phases * fs_lo) + j / fs_lo)
/// for j = 0 .. taps - 1. Row `phases` is row 0 advanced by one sample, so
/// linear interpolation between adjacent rows never wraps.
struct FilteredPulseTable {
  std::vector<float> rows;
  std::size_t phases = 0;
  std::size_t taps = 0;
  double u_start = 0;  // seconds relative to arrival

  const float* row(std::size_t p) const { return rows.data() + p * taps; }

  static double filtered_pulse(double u, const TransducerSpec& xd, const std::vector<double>& h) {
    const double sigma = xd.pulse_sigma();
    const double support = 4.0 * sigma;
    const long long half = static_cast<long long>(h.size() / 2);
    const double dt_hi = 1.0 / xd.sample_rate_hi;
    double acc = 0;
    for (long long i = -half; i <= half; ++i) {
      const double arg = u - static_cast<double>(i) * dt_hi;
      if (std::abs(arg) <= support) acc += h[static_cast<std::size_t>(i + half)] * pulse(arg, xd.center_freq, sigma);
    }
    return acc;
  }

  static FilteredPulseTable build(const TransducerSpec& xd, std::size_t phases = 64) {
    const auto h = decimation_filter(xd.decimation());
    const double dt_lo = 1.0 / xd.sample_rate_lo;
    const double u_max = 4.0 * xd.pulse_sigma() + static_cast<double>(h.size() / 2) / xd.sample_rate_hi;
    // Trim negligible tails, measured on a fine grid.
    const double fine = dt_lo / static_cast<double>(phases);
    double peak = 0;
    std::vector<double> q;
    for (double u = -u_max; u <= u_max; u += fine) {
      q.push_back(filtered_pulse(u, xd, h));
      peak = std::max(peak, std::abs(q.back()));
    }
    std::size_t first = 0, last = q.size() - 1;
    while (first < last && std::abs(q[first]) < 1e-6 * peak) ++first;
    while (last > first && std::abs(q[last]) < 1e-6 * peak) --last;
    FilteredPulseTable t;
    t.phases = phases;
    t.u_start = -u_max + static_cast<double>(first) * fine;
    const double span = static_cast<double>(last - first) * fine;
    t.taps = static_cast<std::size_t>(std::ceil(span / dt_lo)) + 2;
    t.rows.assign((phases + 1) * t.taps, 0.0f);
    for (std::size_t p = 0; p <= phases; ++p)
      for (std::size_t j = 0; j < t.taps; ++j) {
        const double u = t.u_start + static_cast<double>(p) * fine + static_cast<double>(j) * dt_lo;
        t.rows[p * t.taps + j] = static_cast<float>(filtered_pulse(u, xd, h));
      }
    return t;
  }
};

}  // namespace detail

/// Simulates RF_CH(m, n, t). The cube is exactly reciprocal: only m <= n is
/// computed and mirrored.
inline FsaCube simulate_fsa(const ScattererPhantom& phantom, const TransducerSpec& xd, const SimOptions& opt = {}) {
  xd.validate();
  phantom.validate();
  if (phantom.scatterers.empty() && !opt.allow_empty) throw DataError("simulate_fsa: empty phantom");

  const std::size_t ne = xd.n_elements;
  const double fs = opt.high_rate_output ? xd.sample_rate_hi : xd.sample_rate_lo;
  const auto ns = static_cast<std::size_t>(std::ceil(opt.record_duration * fs));
  FsaCube cube{Array3D<float>({ne, ne, ns}, 0.0f), 0.0, fs, xd};
  const std::size_t n_sc = phantom.scatterers.size();
  if (n_sc == 0) return cube;

  // Per-element one-way delay and amplitude weight for each scatterer.
  std::vector<std::vector<float>> delay(ne, std::vector<float>(n_sc));
  std::vector<std::vector<float>> weight(ne, std::vector<float>(n_sc));
  const double c = phantom.sound_speed;
  const double d0sq = opt.spreading_floor * opt.spreading_floor;
  parallel_for(0, ne, [&](std::size_t e) {
    const double xe = xd.element_x(e);
    for (std::size_t s = 0; s < n_sc; ++s) {
      const auto& sc = phantom.scatterers[s];
      const double d = std::hypot(sc.x - xe, sc.z);
      double w = 1.0 / std::sqrt(d * d + d0sq);
      if (opt.directivity != Directivity::none) w *= sc.z / d;
      if (opt.directivity == Directivity::element_width) {
        const double arg = std::numbers::pi * opt.element_width * ((sc.x - xe) / d) / xd.wavelength();
        w *= arg == 0.0 ? 1.0 : std::sin(arg) / arg;
      }
      delay[e][s] = static_cast<float>(d / c);
      weight[e][s] = static_cast<float>(w);
    }
  });

  if (opt.high_rate_output) {
    const double sigma = xd.pulse_sigma();
    const double support = 4.0 * sigma;
    parallel_for(0, ne, [&](std::size_t m) {
      for (std::size_t n = m; n < ne; ++n) {
        auto trace = cube.data.row(m, n);
        for (std::size_t s = 0; s < n_sc; ++s) {
          const double tau = static_cast<double>(delay[m][s]) + static_cast<double>(delay[n][s]);
          const double w = phantom.scatterers[s].amplitude * weight[m][s] * weight[n][s];
          const auto k0 = static_cast<long long>(std::ceil((tau - support) * fs));
          const auto k1 = static_cast<long long>(std::floor((tau + support) * fs));
          for (long long k = std::max(0LL, k0); k <= std::min<long long>(k1, static_cast<long long>(ns) - 1); ++k)
            trace[static_cast<std::size_t>(k)] +=
                static_cast<float>(w * pulse(static_cast<double>(k) / fs - tau, xd.center_freq, sigma));
        }
      }
    });
  } else {
    const auto table = detail::FilteredPulseTable::build(xd);
    const std::size_t taps = table.taps;
    const auto phases = static_cast<double>(table.phases);
    parallel_for(0, ne, [&](std::size_t m) {
      // Padded accumulator so every contribution writes a full row of taps.
      std::vector<float> acc(ns + taps, 0.0f);
      for (std::size_t n = m; n < ne; ++n) {
        std::fill(acc.begin(), acc.end(), 0.0f);
        for (std::size_t s = 0; s < n_sc; ++s) {
          const double amp = phantom.scatterers[s].amplitude;
          if (amp == 0.0) continue;
          const double tau = static_cast<double>(delay[m][s]) + static_cast<double>(delay[n][s]);
          const double first = (tau + table.u_start) * fs;
          const double k0 = std::ceil(first);
          if (k0 >= static_cast<double>(ns)) continue;
          const double phi = std::min((k0 - first) * phases, phases - 1e-9);
          const auto p = static_cast<std::size_t>(phi);
          const double f = phi - static_cast<double>(p);
          const double w = amp * weight[m][s] * weight[n][s];
          const auto w0 = static_cast<float>(w * (1.0 - f));
          const auto w1 = static_cast<float>(w * f);
          const float* a = table.row(p);
          const float* b = table.row(p + 1);
          long long k = static_cast<long long>(k0);
          std::size_t j = 0;
          if (k < 0) {
            j = static_cast<std::size_t>(-k);
            k = 0;
            if (j >= taps) continue;
          }
          float* y = acc.data() + k;
          for (std::size_t i = j; i < taps; ++i) y[i - j] += w0 * a[i] + w1 * b[i];
        }
        auto out = cube.data.row(m, n);
        std::copy(acc.begin(), acc.begin() + static_cast<long long>(ns), out.begin());
      }
    });
  }

  for (std::size_t m = 0; m < ne; ++m)
    for (std::size_t n = m + 1; n < ne; ++n) {
      auto src = cube.data.row(m, n);
      auto dst = cube.data.row(n, m);
      std::copy(src.begin(), src.end(), dst.begin());
    }
  return cube;
}

/// Decimates a high-rate cube to the transducer's low rate with the
/// documented anti-alias filter.
inline FsaCube decimate_fsa(const FsaCube& hi) {
  const std::size_t factor = static_cast<std::size_t>(std::lround(hi.sample_rate / hi.xducer.sample_rate_lo));
  if (factor <= 1) return hi;
  const auto h = decimation_filter(factor);
  const std::size_t ne = hi.n_elements();
  const std::size_t ns = (hi.n_samples() + factor - 1) / factor;
  FsaCube lo{Array3D<float>({ne, ne, ns}, 0.0f), hi.t0, hi.xducer.sample_rate_lo, hi.xducer};
  parallel_for(0, ne, [&](std::size_t m) {
    for (std::size_t n = 0; n < ne; ++n) {
      auto y = fir_decimate(hi.data.row(m, n), factor, ns, h);
      std::copy(y.begin(), y.end(), lo.data.row(m, n).begin());
    }
  });
  return lo;
}

}  // namespace abench
