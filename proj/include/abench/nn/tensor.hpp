// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "abench/core/errors.hpp"

namespace abench::nn {

/// Channel-major feature map (c, h, w).
template <typename T>
struct FeatureMap {
  std::size_t c = 0, h = 0, w = 0;
  std::vector<T> v;

  FeatureMap() = default;
  FeatureMap(std::size_t c_, std::size_t h_, std::size_t w_, T fill = T(0))
      : c(c_), h(h_), w(w_), v(c_ * h_ * w_, fill) {}

  std::size_t plane() const { return h * w; }
  T* channel(std::size_t k) { return v.data() + k * plane(); }
  const T* channel(std::size_t k) const { return v.data() + k * plane(); }
  T& at(std::size_t k, std::size_t y, std::size_t x) { return v[(k * h + y) * w + x]; }
  T at(std::size_t k, std::size_t y, std::size_t x) const { return v[(k * h + y) * w + x]; }
};

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

template <typename T>
MatMap<T> as_matrix(std::vector<T>& v, std::size_t rows, std::size_t cols) {
  return MatMap<T>(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
template <typename T>
ConstMatMap<T> as_matrix(const std::vector<T>& v, std::size_t rows, std::size_t cols) {
  return ConstMatMap<T>(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
template <typename T>
MatMap<T> as_matrix(FeatureMap<T>& f) { return as_matrix(f.v, f.c, f.plane()); }
template <typename T>
ConstMatMap<T> as_matrix(const FeatureMap<T>& f) { return as_matrix(f.v, f.c, f.plane()); }

/// Named trainable array.
template <typename T>
struct Param {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<T> value;
};

/// Gradient buffers laid out like a parameter list.
template <typename T>
struct Gradients {
  std::vector<std::vector<T>> g;

  explicit Gradients(const std::vector<Param<T>>& params) {
    for (const auto& p : params) g.emplace_back(p.value.size(), T(0));
  }
  void zero() {
    for (auto& v : g) std::fill(v.begin(), v.end(), T(0));
  }
  void add(const Gradients& o, T scale = T(1)) {
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::size_t j = 0; j < g[i].size(); ++j) g[i][j] += scale * o.g[i][j];
  }
};

}  // namespace abench::nn
