// SPDX-License-Identifier: Apache-2.0
#pragma once

// Display and network-domain transforms of beamformed RF images.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include "abench/beamformer.hpp"
#include "abench/core/array.hpp"
#include "abench/core/errors.hpp"
#include "abench/core/hilbert.hpp"
#include "abench/core/parallel.hpp"

namespace abench {

inline constexpr double kLogFloorDb = -120.0;

// ------------------------------------------------------------- envelope ---

/// Column-wise (axial) analytic-signal magnitude of a rows x cols array.
template <typename T>
Array2D<double> envelope_of(const Array2D<T>& rf) {
  const std::size_t rows = rf.dim(0), cols = rf.dim(1);
  Array2D<double> env({rows, cols}, 0.0);
  parallel_for(0, cols, [&](std::size_t c) {
    std::vector<double> col(rows), h(rows);
    for (std::size_t r = 0; r < rows; ++r) col[r] = static_cast<double>(rf(r, c));
    hilbert(col, h);
    for (std::size_t r = 0; r < rows; ++r) env(r, c) = std::hypot(col[r], h[r]);
  });
  return env;
}

inline Array2D<double> envelope(const RfImage& rf) {
  if (rf.rows() < 16) throw DataError("envelope: need at least 16 rows");
  return envelope_of(rf.data);
}

template <typename T>
Array2D<float> to_float(const Array2D<T>& a) {
  Array2D<float> out(a.dims());
  std::transform(a.flat().begin(), a.flat().end(), out.flat().begin(), [](T v) { return static_cast<float>(v); });
  return out;
}

// ---------------------------------------------------------------- B-mode ---

struct BModeImage {
  Array2D<double> data;  // standardized log-envelope
  ImageGrid grid;
};

/// 20 log10(env / max) floored at -120 dB, then standardized to zero mean and
/// unit (population) standard deviation.
inline Array2D<double> bmode_from_envelope(const Array2D<double>& env) {
  double peak = 0;
  for (double v : env.flat()) peak = std::max(peak, v);
  if (!(peak > 0)) throw DataError("bmode: all-zero envelope");
  Array2D<double> out(env.dims());
  auto o = out.flat();
  auto e = env.flat();
  double mean = 0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double r = e[i] / peak;
    o[i] = r > 0 ? std::max(kLogFloorDb, 20.0 * std::log10(r)) : kLogFloorDb;
    mean += o[i];
  }
  mean /= static_cast<double>(o.size());
  double var = 0;
  for (double v : o) var += (v - mean) * (v - mean);
  var /= static_cast<double>(o.size());
  const double sd = std::sqrt(var);
  if (!(sd > 1e-12)) throw DataError("bmode: degenerate image (zero standard deviation)");
  for (double& v : o) v = (v - mean) / sd;
  return out;
}

inline BModeImage bmode(const RfImage& rf) { return {bmode_from_envelope(envelope(rf)), rf.grid}; }

// ---------------------------------------------------------- Yeo-Johnson ---

/// Yeo-Johnson power transform of a scalar.
inline double yeo_johnson(double x, double lambda) {
  constexpr double eps = 1e-12;
  if (x >= 0) {
    if (std::abs(lambda) < eps) return std::log1p(x);
    return (std::pow(x + 1.0, lambda) - 1.0) / lambda;
  }
  if (std::abs(lambda - 2.0) < eps) return -std::log1p(-x);
  return -(std::pow(1.0 - x, 2.0 - lambda) - 1.0) / (2.0 - lambda);
}

inline double yeo_johnson_inverse(double u, double lambda) {
  constexpr double eps = 1e-12;
  if (u >= 0) {
    if (std::abs(lambda) < eps) return std::expm1(u);
    return std::pow(lambda * u + 1.0, 1.0 / lambda) - 1.0;
  }
  if (std::abs(lambda - 2.0) < eps) return -std::expm1(-u);
  return 1.0 - std::pow(1.0 - (2.0 - lambda) * u, 1.0 / (2.0 - lambda));
}

/// d/du of yeo_johnson_inverse.
inline double yeo_johnson_inverse_derivative(double u, double lambda) {
  constexpr double eps = 1e-12;
  if (u >= 0) {
    if (std::abs(lambda) < eps) return std::exp(u);
    return std::pow(lambda * u + 1.0, 1.0 / lambda - 1.0);
  }
  if (std::abs(lambda - 2.0) < eps) return std::exp(-u);
  return std::pow(1.0 - (2.0 - lambda) * u, 1.0 / (2.0 - lambda) - 1.0);
}

/// Gaussian log-likelihood of transformed samples (up to a constant).
inline double yeo_johnson_log_likelihood(std::span<const double> x, double lambda) {
  const auto n = static_cast<double>(x.size());
  double mean = 0, jac = 0;
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = yeo_johnson(x[i], lambda);
    mean += y[i];
    jac += std::copysign(std::log1p(std::abs(x[i])), x[i]);
  }
  mean /= n;
  double var = 0;
  for (double v : y) var += (v - mean) * (v - mean);
  var /= n;
  return -0.5 * n * std::log(var) + (lambda - 1.0) * jac;
}

/// Maximum-likelihood lambda by golden-section search on [lo, hi].
inline double fit_yeo_johnson_lambda(std::span<const double> x, double lo = -2.0, double hi = 4.0) {
  if (x.size() < 2) throw DivergenceError("fit_yeo_johnson_lambda: need at least 2 samples");
  auto f = [&](double l) {
    const double v = yeo_johnson_log_likelihood(x, l);
    if (!std::isfinite(v)) throw DivergenceError("fit_yeo_johnson_lambda: non-finite likelihood");
    return v;
  };
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > 1e-6) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

// -------------------------------------------------------- network domain ---

/// Everything needed to map a network-domain tensor back to RF units. The
/// affine bounds are the transform of [-1, 1], the range of max-normalized
/// data, so every normalized image lands inside [0, 1].
struct NetTransform {
  double max = 1.0;  // per-image max |rf| after lateral downsampling
  double lambda = 1.0;
  double lo = -1.0, hi = 1.0;

  static NetTransform for_lambda(double lambda, double max = 1.0) {
    return {max, lambda, yeo_johnson(-1.0, lambda), yeo_johnson(1.0, lambda)};
  }

  double forward(double rf) const { return (yeo_johnson(rf / max, lambda) - lo) / (hi - lo); }
  double inverse(double y) const { return max * yeo_johnson_inverse(lo + y * (hi - lo), lambda); }
  double inverse_derivative(double y) const {
    return max * (hi - lo) * yeo_johnson_inverse_derivative(lo + y * (hi - lo), lambda);
  }
};

struct NetTensor {
  Array2D<float> data;  // values in [0, 1]
  NetTransform meta;
  ImageGrid grid;       // laterally downsampled grid
};

/// Mean of adjacent column pairs; an odd trailing column is dropped.
inline RfImage downsample_lateral(const RfImage& rf) {
  const std::size_t rows = rf.rows(), cols = rf.cols() / 2;
  RfImage out{Array2D<float>({rows, cols}, 0.0f), rf.grid.downsample_lateral()};
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      out.data(r, c) = 0.5f * (rf.data(r, 2 * c) + rf.data(r, 2 * c + 1));
  return out;
}

inline double max_abs(std::span<const float> v) {
  double m = 0;
  for (float x : v) m = std::max(m, static_cast<double>(std::abs(x)));
  return m;
}

/// Network domain of an already-downsampled image.
inline NetTensor to_net_domain_downsampled(const RfImage& ds, double lambda) {
  const double peak = max_abs(ds.data.flat());
  if (!(peak > 0)) throw DataError("to_net_domain: all-zero image");
  NetTensor t{Array2D<float>(ds.data.dims()), NetTransform::for_lambda(lambda, peak), ds.grid};
  auto src = ds.data.flat();
  auto dst = t.data.flat();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double y = t.meta.forward(src[i]);
    if (!std::isfinite(y)) throw DivergenceError("to_net_domain: non-finite transform value");
    dst[i] = static_cast<float>(std::clamp(y, 0.0, 1.0));
  }
  return t;
}

inline NetTensor to_net_domain(const RfImage& rf, double lambda) {
  return to_net_domain_downsampled(downsample_lateral(rf), lambda);
}

/// Inverse of every step after the lateral downsample.
inline RfImage from_net_domain(const NetTensor& t) {
  RfImage out{Array2D<float>(t.data.dims()), t.grid};
  auto src = t.data.flat();
  auto dst = out.data.flat();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<float>(t.meta.inverse(src[i]));
  return out;
}

/// Lambda fitted on max-normalized, downsampled training images. Samples are
/// taken on a fixed stride so at most `max_samples` values enter the fit.
inline double fit_lambda(const std::vector<const RfImage*>& images, std::size_t max_samples = 1'000'000) {
  std::size_t total = 0;
  for (const auto* im : images) total += (im->cols() / 2) * im->rows();
  if (total == 0) throw DivergenceError("fit_lambda: no samples");
  const std::size_t stride = std::max<std::size_t>(1, total / max_samples);
  std::vector<double> xs;
  xs.reserve(total / stride + 1);
  std::size_t counter = 0;
  for (const auto* im : images) {
    const RfImage ds = downsample_lateral(*im);
    const double peak = max_abs(ds.data.flat());
    if (!(peak > 0)) continue;
    for (float v : ds.data.flat())
      if (counter++ % stride == 0) xs.push_back(v / peak);
  }
  return fit_yeo_johnson_lambda(xs);
}

// ------------------------------------------------------------------ PNG ---

/// 8-bit grayscale rendering of a linear envelope: 0 dB (image max) -> 255,
/// -dynamic_range_db -> 0, linear in dB in between.
inline std::vector<std::uint8_t> display_bytes(const Array2D<double>& env, double dynamic_range_db) {
  if (!(dynamic_range_db > 0)) throw RangeError("render: dynamic range must be positive");
  double peak = 0;
  for (double v : env.flat()) peak = std::max(peak, v);
  std::vector<std::uint8_t> px(env.size(), 0);
  if (!(peak > 0)) return px;
  auto e = env.flat();
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double db = e[i] > 0 ? 20.0 * std::log10(e[i] / peak) : -std::numeric_limits<double>::infinity();
    const double v = std::clamp(255.0 * (db + dynamic_range_db) / dynamic_range_db, 0.0, 255.0);
    px[i] = static_cast<std::uint8_t>(std::lround(v));
  }
  return px;
}

inline void render_png(const Array2D<double>& env, double dynamic_range_db, const std::filesystem::path& path) {
  const auto px = display_bytes(env, dynamic_range_db);
  const auto height = static_cast<png_uint_32>(env.dim(0));
  const auto width = static_cast<png_uint_32>(env.dim(1));
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw IoError("render_png: cannot open " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("render_png: libpng failure writing " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (png_uint_32 r = 0; r < height; ++r)
    png_write_row(png, const_cast<png_bytep>(px.data() + static_cast<std::size_t>(r) * width));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fclose(fp) != 0) throw IoError("render_png: close failed for " + path.string());
}

}  // namespace abench
