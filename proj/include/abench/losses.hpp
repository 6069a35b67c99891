// SPDX-License-Identifier: Apache-2.0
#pragma once

// Training losses on network-domain tensors, each returning the value and
// its gradient with respect to the network output.
//
//   mse            mean((S' - S_hat)^2) in the network domain
//   bmode          mean((B(S') - B(S_hat))^2), B = standardized log-envelope
//                  of the tensors mapped back to RF units
//   adaptive_mixed (1 - a) * bmode + a * mse, a = epoch / total_epochs

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "abench/bmode_pipeline.hpp"
#include "abench/core/array.hpp"
#include "abench/core/errors.hpp"
#include "abench/core/hilbert.hpp"

namespace abench {

struct LossContext {
  std::size_t current_epoch = 0;
  std::size_t total_epochs = 1;

  void validate() const {
    if (total_epochs < 1 || current_epoch > total_epochs)
      throw RangeError("LossContext: need 0 <= current_epoch <= total_epochs, total_epochs >= 1");
  }
  double alpha() const { return static_cast<double>(current_epoch) / static_cast<double>(total_epochs); }
};

struct LossResult {
  double value = 0;
  Array2D<double> grad;  // d loss / d output, same shape as the output
};

/// Smooth stand-in for max(x, floor): floor + s * softplus((x - floor) / s).
struct SoftFloor {
  double floor = kLogFloorDb;
  double softness = 1.0;  // dB

  double value(double x) const {
    const double z = (x - floor) / softness;
    const double sp = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    return floor + softness * sp;
  }
  double derivative(double x) const {
    const double z = (x - floor) / softness;
    return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  }
};

/// Differentiable B-mode operator on an RF array (rows x cols, axial
/// envelope). Keeps the intermediates needed for the vector-Jacobian product.
class DifferentiableBMode {
 public:
  explicit DifferentiableBMode(const Array2D<double>& rf, SoftFloor floor = {}) : floor_(floor), rf_(rf) {
    const std::size_t rows = rf.dim(0), cols = rf.dim(1);
    hil_ = Array2D<double>({rows, cols});
    env_ = Array2D<double>({rows, cols});
    std::vector<double> col(rows), h(rows);
    for (std::size_t c = 0; c < cols; ++c) {
      for (std::size_t r = 0; r < rows; ++r) col[r] = rf(r, c);
      hilbert(col, h);
      for (std::size_t r = 0; r < rows; ++r) {
        hil_(r, c) = h[r];
        env_(r, c) = std::hypot(col[r], h[r]);
      }
    }
    auto e = env_.flat();
    argmax_ = static_cast<std::size_t>(std::max_element(e.begin(), e.end()) - e.begin());
    peak_ = e[argmax_];
    if (!(peak_ > 0)) throw DataError("bmode loss: all-zero envelope");

    db_ = Array2D<double>(env_.dims());
    out_ = Array2D<double>(env_.dims());
    auto d = db_.flat();
    auto o = out_.flat();
    const double log_peak = std::log(peak_);
    double mean = 0;
    for (std::size_t i = 0; i < e.size(); ++i) {
      d[i] = e[i] > 0 ? kDbPerNeper * (std::log(e[i]) - log_peak) : -1e300;
      o[i] = e[i] > 0 ? floor_.value(d[i]) : floor_.floor;
      mean += o[i];
    }
    const auto n = static_cast<double>(o.size());
    mean /= n;
    double var = 0;
    for (double v : o) var += (v - mean) * (v - mean);
    sd_ = std::sqrt(var / n);
    if (!(sd_ > 1e-12)) throw DataError("bmode loss: degenerate image (zero standard deviation)");
    for (double& v : o) v = (v - mean) / sd_;
  }

  const Array2D<double>& output() const { return out_; }

  /// d(sum g * B) / d rf.
  Array2D<double> backward(const Array2D<double>& g) const {
    const auto n = static_cast<double>(out_.size());
    auto gb = g.flat();
    auto b = out_.flat();
    double g_mean = 0, gb_mean = 0;
    for (std::size_t i = 0; i < gb.size(); ++i) {
      g_mean += gb[i];
      gb_mean += gb[i] * b[i];
    }
    g_mean /= n;
    gb_mean /= n;

    const std::size_t rows = rf_.dim(0), cols = rf_.dim(1);
    Array2D<double> g_env(env_.dims(), 0.0);
    auto ge = g_env.flat();
    auto e = env_.flat();
    auto d = db_.flat();
    double g_peak = 0;
    for (std::size_t i = 0; i < gb.size(); ++i) {
      if (!(e[i] > 0)) continue;
      const double g_floor = (gb[i] - g_mean - b[i] * gb_mean) / sd_;
      const double g_db = g_floor * floor_.derivative(d[i]);
      ge[i] += kDbPerNeper * g_db / e[i];
      g_peak -= kDbPerNeper * g_db / peak_;
    }
    ge[argmax_] += g_peak;  // subgradient of max flows to the argmax element

    Array2D<double> g_rf({rows, cols}, 0.0);
    std::vector<double> gh(rows), hg(rows);
    for (std::size_t c = 0; c < cols; ++c) {
      for (std::size_t r = 0; r < rows; ++r) {
        const double ev = env_(r, c);
        if (ev > 0) {
          g_rf(r, c) = g_env(r, c) * rf_(r, c) / ev;
          gh[r] = g_env(r, c) * hil_(r, c) / ev;
        } else {
          gh[r] = 0;
        }
      }
      hilbert(gh, hg);  // adjoint of the Hilbert operator is its negative
      for (std::size_t r = 0; r < rows; ++r) g_rf(r, c) -= hg[r];
    }
    return g_rf;
  }

 private:
  static constexpr double kDbPerNeper = 20.0 / 2.302585092994045684;

  SoftFloor floor_;
  Array2D<double> rf_, hil_, env_, db_, out_;
  std::size_t argmax_ = 0;
  double peak_ = 0, sd_ = 0;
};

inline Array2D<double> widen(const Array2D<float>& a) {
  Array2D<double> out(a.dims());
  std::copy(a.flat().begin(), a.flat().end(), out.flat().begin());
  return out;
}

inline Array2D<double> net_to_rf(const Array2D<double>& y, const NetTransform& meta) {
  Array2D<double> rf(y.dims());
  auto s = y.flat();
  auto d = rf.flat();
  for (std::size_t i = 0; i < s.size(); ++i) d[i] = meta.inverse(s[i]);
  return rf;
}

inline LossResult loss_mse(const Array2D<double>& target, const Array2D<double>& output) {
  require_same_shape(target, output, "loss_mse");
  LossResult res{0.0, Array2D<double>(output.dims())};
  auto t = target.flat();
  auto o = output.flat();
  auto g = res.grad.flat();
  const auto n = static_cast<double>(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double diff = o[i] - t[i];
    res.value += diff * diff;
    g[i] = 2.0 * diff / n;
  }
  res.value /= n;
  return res;
}

inline LossResult loss_bmode(const Array2D<double>& target, const NetTransform& target_meta,
                             const Array2D<double>& output, const NetTransform& output_meta) {
  require_same_shape(target, output, "loss_bmode");
  const DifferentiableBMode bt(net_to_rf(target, target_meta));
  const DifferentiableBMode bo(net_to_rf(output, output_meta));
  const auto& a = bt.output();
  const auto& b = bo.output();
  const auto n = static_cast<double>(a.size());
  Array2D<double> g_b(b.dims());
  double value = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = b.flat()[i] - a.flat()[i];
    value += diff * diff;
    g_b.flat()[i] = 2.0 * diff / n;
  }
  LossResult res{value / n, bo.backward(g_b)};
  auto g = res.grad.flat();
  auto y = output.flat();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= output_meta.inverse_derivative(y[i]);
  return res;
}

struct MixedLossResult {
  double value = 0;
  double bmode = 0;
  double mse = 0;
  double alpha = 0;
  Array2D<double> grad;
};

inline MixedLossResult loss_adaptive_mixed(const Array2D<double>& target, const NetTransform& target_meta,
                                           const Array2D<double>& output, const NetTransform& output_meta,
                                           const LossContext& ctx) {
  ctx.validate();
  const double a = ctx.alpha();
  const auto lb = loss_bmode(target, target_meta, output, output_meta);
  const auto lm = loss_mse(target, output);
  MixedLossResult res{(1.0 - a) * lb.value + a * lm.value, lb.value, lm.value, a, Array2D<double>(output.dims())};
  auto g = res.grad.flat();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = (1.0 - a) * lb.grad.flat()[i] + a * lm.grad.flat()[i];
  return res;
}

// NetTensor conveniences (values only).

inline double loss_mse(const NetTensor& target, const NetTensor& output) {
  return loss_mse(widen(target.data), widen(output.data)).value;
}

inline double loss_bmode(const NetTensor& target, const NetTensor& output) {
  return loss_bmode(widen(target.data), target.meta, widen(output.data), output.meta).value;
}

inline double loss_adaptive_mixed(const NetTensor& target, const NetTensor& output, const LossContext& ctx) {
  return loss_adaptive_mixed(widen(target.data), target.meta, widen(output.data), output.meta, ctx).value;
}

}  // namespace abench
