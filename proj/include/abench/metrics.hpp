// SPDX-License-Identifier: Apache-2.0
#pragma once

// ROI image-quality metrics on linear (pre-log) envelope images.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "abench/beamformer.hpp"
#include "abench/core/array.hpp"
#include "abench/core/errors.hpp"

namespace abench {

struct Circle {
  double cx = 0, cz = 0, r = 0;
};

struct Rect {
  double x0 = 0, x1 = 0, z0 = 0, z1 = 0;
  bool contains(double x, double z) const { return x >= x0 && x <= x1 && z >= z0 && z <= z1; }
};

/// Target disc, contrast background annulus at [1.1 r, 1.5 r], and a
/// rectangle for speckle SNR.
struct RoiSpec {
  Circle target;
  double annulus_inner = 1.1;  // multiples of the target radius
  double annulus_outer = 1.5;
  Rect snr_background;

  void validate() const {
    if (!(target.r > 0)) throw RangeError("RoiSpec: target radius must be positive");
    if (!(annulus_outer > annulus_inner && annulus_inner >= 1.0))
      throw RangeError("RoiSpec: annulus radii must satisfy 1 <= inner < outer");
    if (!(snr_background.x1 > snr_background.x0 && snr_background.z1 > snr_background.z0))
      throw RangeError("RoiSpec: empty SNR rectangle");
  }

  bool in_target(double x, double z) const {
    return std::hypot(x - target.cx, z - target.cz) <= target.r;
  }
  bool in_annulus(double x, double z) const {
    const double d = std::hypot(x - target.cx, z - target.cz);
    return d >= annulus_inner * target.r && d <= annulus_outer * target.r;
  }
};

/// Regions used for the two-cyst test phantom. The SNR rectangle sits in
/// speckle left of both cysts and clear of both annuli.
inline RoiSpec cyst_roi_top() { return {{0.0, 20e-3, 5e-3}, 1.1, 1.5, {-16e-3, -12e-3, 16e-3, 28e-3}}; }
inline RoiSpec cyst_roi_bottom() { return {{0.0, 38e-3, 7.5e-3}, 1.1, 1.5, {-16e-3, -12e-3, 16e-3, 28e-3}}; }

template <typename Pred>
std::vector<double> roi_samples(const Array2D<double>& env, const ImageGrid& grid, Pred&& inside) {
  if (env.dim(0) != grid.rows() || env.dim(1) != grid.cols()) throw ShapeError("metrics: image/grid mismatch");
  std::vector<double> v;
  for (std::size_t r = 0; r < grid.rows(); ++r)
    for (std::size_t c = 0; c < grid.cols(); ++c)
      if (inside(grid.x[c], grid.z[r])) v.push_back(env(r, c));
  return v;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// 20 log10(mean_background / mean_target). Returns +infinity when the target
/// mean is exactly zero.
inline double contrast_db(const Array2D<double>& env, const ImageGrid& grid, const RoiSpec& roi) {
  roi.validate();
  const auto t = roi_samples(env, grid, [&](double x, double z) { return roi.in_target(x, z); });
  const auto b = roi_samples(env, grid, [&](double x, double z) { return roi.in_annulus(x, z); });
  if (t.empty() || b.empty()) throw DataError("contrast_db: empty ROI");
  const double mt = mean_of(t), mb = mean_of(b);
  if (mt == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(mb / mt);
}

/// 1 - sum_bins min(p_a, p_b) over `bins` bins spanning the pooled min..max.
inline double gcnr_samples(const std::vector<double>& a, const std::vector<double>& b, std::size_t bins = 256) {
  if (a.empty() || b.empty()) throw DataError("gcnr: empty ROI");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : a) lo = std::min(lo, v), hi = std::max(hi, v);
  for (double v : b) lo = std::min(lo, v), hi = std::max(hi, v);
  if (!(hi > lo)) return 0.0;
  std::vector<double> ha(bins, 0.0), hb(bins, 0.0);
  const double scale = static_cast<double>(bins) / (hi - lo);
  auto bin = [&](double v) { return std::min(bins - 1, static_cast<std::size_t>((v - lo) * scale)); };
  for (double v : a) ha[bin(v)] += 1.0 / static_cast<double>(a.size());
  for (double v : b) hb[bin(v)] += 1.0 / static_cast<double>(b.size());
  double overlap = 0;
  for (std::size_t i = 0; i < bins; ++i) overlap += std::min(ha[i], hb[i]);
  return std::clamp(1.0 - overlap, 0.0, 1.0);
}

inline double gcnr(const Array2D<double>& env, const ImageGrid& grid, const RoiSpec& roi) {
  roi.validate();
  const auto t = roi_samples(env, grid, [&](double x, double z) { return roi.in_target(x, z); });
  const auto b = roi_samples(env, grid, [&](double x, double z) { return roi.in_annulus(x, z); });
  if (t.size() < 100 || b.size() < 100) throw DataError("gcnr: ROIs need at least 100 pixels each");
  return gcnr_samples(t, b);
}

inline double snr_samples(const std::vector<double>& v) {
  if (v.empty()) throw DataError("speckle_snr: empty ROI");
  const double m = mean_of(v);
  double var = 0;
  for (double x : v) var += (x - m) * (x - m);
  const double sd = std::sqrt(var / static_cast<double>(v.size()));
  if (!(sd > 0)) throw DataError("speckle_snr: zero standard deviation");
  return m / sd;
}

inline double speckle_snr(const Array2D<double>& env, const ImageGrid& grid, const RoiSpec& roi) {
  roi.validate();
  return snr_samples(roi_samples(env, grid, [&](double x, double z) { return roi.snr_background.contains(x, z); }));
}

struct MetricStats {
  double mean = 0, std = 0;
};

inline MetricStats stats_of(const std::vector<double>& v) {
  MetricStats s{mean_of(v), 0};
  double var = 0;
  for (double x : v) var += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(var / static_cast<double>(v.size()));
  return s;
}

struct NamedRoi {
  std::string name;
  RoiSpec roi;
};

struct SuiteReport {
  struct Row {
    std::string roi;
    MetricStats contrast_db, gcnr, speckle_snr;
  };
  std::size_t n_images = 0;
  std::vector<Row> rows;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["n_images"] = n_images;
    for (const auto& r : rows) {
      auto put = [](const MetricStats& s) { return nlohmann::json{{"mean", s.mean}, {"std", s.std}}; };
      j["rois"][r.roi] = {{"contrast_db", put(r.contrast_db)}, {"gcnr", put(r.gcnr)}, {"speckle_snr", put(r.speckle_snr)}};
    }
    return j;
  }

  std::string to_table() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "ROI          Metric           Mean +- Std   (n = " << n_images << ")\n";
    for (const auto& r : rows) {
      os << std::left << std::setw(13) << r.roi << "Contrast (dB)    " << r.contrast_db.mean << " +- " << r.contrast_db.std << '\n';
      os << std::setw(13) << "" << "gCNR             " << r.gcnr.mean << " +- " << r.gcnr.std << '\n';
      os << std::setw(13) << "" << "Speckle SNR      " << r.speckle_snr.mean << " +- " << r.speckle_snr.std << '\n';
    }
    return os.str();
  }
};

/// Per-ROI mean and population std across image versions.
inline SuiteReport evaluate_suite(const std::vector<Array2D<double>>& envelopes, const ImageGrid& grid,
                                  const std::vector<NamedRoi>& rois) {
  if (envelopes.empty()) throw DataError("evaluate_suite: no images");
  SuiteReport rep;
  rep.n_images = envelopes.size();
  for (const auto& nr : rois) {
    std::vector<double> c, g, s;
    for (const auto& env : envelopes) {
      c.push_back(contrast_db(env, grid, nr.roi));
      g.push_back(gcnr(env, grid, nr.roi));
      s.push_back(speckle_snr(env, grid, nr.roi));
    }
    rep.rows.push_back({nr.name, stats_of(c), stats_of(g), stats_of(s)});
  }
  return rep;
}

}  // namespace abench
