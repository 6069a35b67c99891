// SPDX-License-Identifier: Apache-2.0
#pragma once

// Plane-wave delay-and-sum with receive-side phase-screen delays and an
// f-number-limited receive aperture.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "abench/aberration_profile.hpp"
#include "abench/core/array.hpp"
#include "abench/core/errors.hpp"
#include "abench/core/parallel.hpp"
#include "abench/fractional_delay.hpp"
#include "abench/wavefront_synthesis.hpp"

namespace abench {

struct ImageGrid {
  std::vector<double> x;  // lateral column positions, m
  std::vector<double> z;  // depth row positions, m, strictly increasing

  std::size_t rows() const { return z.size(); }
  std::size_t cols() const { return x.size(); }
  double dz() const { return z.size() > 1 ? z[1] - z[0] : 0.0; }

  void validate() const {
    if (x.empty() || z.empty()) throw RangeError("ImageGrid: empty axis");
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (!(z[i] > 0)) throw RangeError("ImageGrid: depths must be positive");
      if (i && !(z[i] > z[i - 1])) throw RangeError("ImageGrid: depths must increase");
    }
  }

  /// Rows [r0, r1) of this grid.
  ImageGrid slice_rows(std::size_t r0, std::size_t r1) const {
    return {x, std::vector<double>(z.begin() + static_cast<long long>(r0), z.begin() + static_cast<long long>(r1))};
  }

  /// Column positions after averaging adjacent pairs.
  ImageGrid downsample_lateral() const {
    ImageGrid g{{}, z};
    for (std::size_t i = 0; i + 1 < x.size(); i += 2) g.x.push_back(0.5 * (x[i] + x[i + 1]));
    return g;
  }
};

/// Columns span the element footprint; rows every c / (2 fs) over [z0, z1].
inline ImageGrid default_grid(std::size_t n_elements = 128, double pitch = 0.3e-3, double sample_rate = 20.832e6,
                              double c = 1540, std::size_t n_cols = 384, double z0 = 10e-3, double z1 = 50e-3) {
  ImageGrid g;
  const double x0 = -0.5 * static_cast<double>(n_elements - 1) * pitch;
  const double span = static_cast<double>(n_elements - 1) * pitch;
  for (std::size_t i = 0; i < n_cols; ++i)
    g.x.push_back(x0 + span * static_cast<double>(i) / static_cast<double>(n_cols - 1));
  const double dz = c / (2.0 * sample_rate);
  for (double z = z0; z <= z1 + 1e-12; z += dz) g.z.push_back(z);
  return g;
}

struct RfImage {
  Array2D<float> data;  // (depth row, lateral column)
  ImageGrid grid;

  std::size_t rows() const { return data.dim(0); }
  std::size_t cols() const { return data.dim(1); }
};

/// Two-way travel time for a 0-degree plane wave to (x, z) and back to x_n.
inline double tof(double x_n, double x, double z, double c) {
  return (z + std::sqrt(z * z + (x - x_n) * (x - x_n))) / c;
}

enum class Interp { linear, kaiser_sinc };
enum class Apodization { rectangular, hann };

struct BeamformOptions {
  double f_number = 1.75;
  double sound_speed = 1540;
  Interp interp = Interp::linear;
  Apodization apodization = Apodization::rectangular;
};

struct BeamformResult {
  RfImage image;
  std::size_t out_of_record = 0;  // element samples that fell outside the record
  bool coverage_warning() const { return out_of_record > 0; }
};

/// Receive aperture [first, last] for a pixel: n_ap = max(1, round(z / (F * pitch)))
/// elements centered on the nearest element k, floor(n_ap / 2) to the left,
/// clipped to the array.
struct Aperture {
  long long first, last;
};

inline Aperture receive_aperture(double x, double z, std::size_t n_elements, double pitch, double f_number) {
  const double x0 = -0.5 * static_cast<double>(n_elements - 1) * pitch;
  const long long last_el = static_cast<long long>(n_elements) - 1;
  const long long k = std::clamp(std::llround((x - x0) / pitch), 0LL, last_el);
  const long long n_ap = std::max(1LL, std::llround(z / f_number / pitch));
  const long long first = k - n_ap / 2;
  const long long last = first + n_ap - 1;
  return {std::max(0LL, first), std::min(last_el, last)};
}

inline BeamformResult beamform(const ChannelRF& rf, const AberrationProfile& profile, const ImageGrid& grid,
                               const BeamformOptions& opt = {}) {
  if (!(opt.f_number > 0)) throw RangeError("beamform: f_number must be positive");
  if (!(opt.sound_speed > 0)) throw RangeError("beamform: sound speed must be positive");
  const std::size_t ne = rf.n_elements();
  if (profile.n_elements() != ne)
    throw ShapeError("beamform: profile has " + std::to_string(profile.n_elements()) + " elements, data has " +
                     std::to_string(ne));
  profile.validate();
  grid.validate();

  const double pitch = profile.pitch;
  const double fs = rf.sample_rate;
  std::vector<double> xe(ne);
  for (std::size_t n = 0; n < ne; ++n) xe[n] = (static_cast<double>(n) - 0.5 * static_cast<double>(ne - 1)) * pitch;

  BeamformResult res{RfImage{Array2D<float>({grid.rows(), grid.cols()}, 0.0f), grid}, 0};
  std::vector<std::size_t> misses(grid.cols(), 0);
  const double last_sample = static_cast<double>(rf.n_samples() - 1);

  parallel_for(0, grid.cols(), [&](std::size_t col) {
    const double x = grid.x[col];
    for (std::size_t row = 0; row < grid.rows(); ++row) {
      const double z = grid.z[row];
      const auto ap = receive_aperture(x, z, ne, pitch, opt.f_number);
      const double width = static_cast<double>(ap.last - ap.first + 1);
      double acc = 0;
      for (long long n = ap.first; n <= ap.last; ++n) {
        const auto un = static_cast<std::size_t>(n);
        const double t = tof(xe[un], x, z, opt.sound_speed) + profile.delays[un];
        const double pos = (t - rf.t0) * fs;
        if (pos < 0 || pos > last_sample) {
          ++misses[col];
          continue;
        }
        auto trace = rf.data.row(un);
        double v = opt.interp == Interp::linear ? linear_read(trace, pos) : KaiserSinc8::read(trace, pos);
        if (opt.apodization == Apodization::hann && width > 1) {
          const double u = (static_cast<double>(n - ap.first) + 0.5) / width;
          v *= 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * u);
        }
        acc += v;
      }
      res.image.data(row, col) = static_cast<float>(acc);
    }
  });
  for (auto m : misses) res.out_of_record += m;
  return res;
}

}  // namespace abench
