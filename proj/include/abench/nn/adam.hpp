// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "abench/nn/tensor.hpp"

namespace abench::nn {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 added to the gradient
};

template <typename T = float>
class Adam {
 public:
  Adam() = default;
  Adam(const std::vector<Param<T>>& params, AdamOptions opt = {}) : opt_(opt) {
    for (const auto& p : params) {
      m_.emplace_back(p.value.size(), T(0));
      v_.emplace_back(p.value.size(), T(0));
    }
  }

  void step(std::vector<Param<T>>& params, const Gradients<T>& g, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& w = params[i].value;
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double gj = g.g[i][j] + opt_.weight_decay * w[j];
        m[j] = static_cast<T>(opt_.beta1 * m[j] + (1.0 - opt_.beta1) * gj);
        v[j] = static_cast<T>(opt_.beta2 * v[j] + (1.0 - opt_.beta2) * gj * gj);
        const double mh = m[j] / bc1, vh = v[j] / bc2;
        w[j] = static_cast<T>(w[j] - lr * mh / (std::sqrt(vh) + opt_.eps));
      }
    }
  }

  std::uint64_t steps() const { return t_; }
  const AdamOptions& options() const { return opt_; }
  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  void set_steps(std::uint64_t t) { t_ = t; }

 private:
  AdamOptions opt_;
  std::vector<std::vector<T>> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace abench::nn
