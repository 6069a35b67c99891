// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "abench/core/errors.hpp"

namespace abench {

/// Dense row-major array with owning storage. The last index varies fastest.
template <typename T, std::size_t Rank>
class Array {
 public:
  using value_type = T;
  using Shape = std::array<std::size_t, Rank>;

  Array() { dims_.fill(0); }

  explicit Array(const Shape& dims, T fill = T{}) : dims_(dims), data_(count(dims), fill) {}

  Array(const Shape& dims, std::vector<T> data) : dims_(dims), data_(std::move(data)) {
    if (data_.size() != count(dims_)) throw ShapeError("Array: payload does not match dims");
  }

  static constexpr std::size_t rank() { return Rank; }
  const Shape& dims() const { return dims_; }
  std::size_t dim(std::size_t i) const { return dims_[i]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> flat() { return data_; }
  std::span<const T> flat() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  template <typename... I>
  T& operator()(I... idx) {
    static_assert(sizeof...(I) == Rank);
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }
  template <typename... I>
  const T& operator()(I... idx) const {
    static_assert(sizeof...(I) == Rank);
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }

  /// Contiguous view of the innermost row addressed by the leading indices.
  template <typename... I>
  std::span<T> row(I... lead) {
    static_assert(sizeof...(I) == Rank - 1);
    std::array<std::size_t, Rank> idx{static_cast<std::size_t>(lead)..., 0};
    return {data_.data() + offset(idx), dims_[Rank - 1]};
  }
  template <typename... I>
  std::span<const T> row(I... lead) const {
    static_assert(sizeof...(I) == Rank - 1);
    std::array<std::size_t, Rank> idx{static_cast<std::size_t>(lead)..., 0};
    return {data_.data() + offset(idx), dims_[Rank - 1]};
  }

  bool operator==(const Array&) const = default;

  static std::size_t count(const Shape& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>{});
  }

 private:
  std::size_t offset(const std::array<std::size_t, Rank>& idx) const {
    std::size_t off = 0;
    for (std::size_t i = 0; i < Rank; ++i) off = off * dims_[i] + idx[i];
    return off;
  }

  Shape dims_;
  std::vector<T> data_;
};

template <typename T>
using Array1D = Array<T, 1>;
template <typename T>
using Array2D = Array<T, 2>;
template <typename T>
using Array3D = Array<T, 3>;

template <typename T, std::size_t R>
std::string shape_string(const Array<T, R>& a) {
  std::string s = "[";
  for (std::size_t i = 0; i < R; ++i) s += (i ? "," : "") + std::to_string(a.dim(i));
  return s + "]";
}

template <typename T, typename U, std::size_t R>
void require_same_shape(const Array<T, R>& a, const Array<U, R>& b, const char* what) {
  if (a.dims() != b.dims())
    throw ShapeError(std::string(what) + ": shape " + shape_string(a) + " vs " + shape_string(b));
}

}  // namespace abench
