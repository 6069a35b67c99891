// SPDX-License-Identifier: Apache-2.0
#pragma once

// Layer kernels with hand-written backward passes. Each forward returns what
// its backward needs; backward accumulates into the parameter gradients.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "abench/nn/tensor.hpp"

namespace abench::nn {

// ------------------------------------------------------------ conv 3x3 ---

/// Unfolds 3x3 neighbourhoods with zero padding: rows (ci, ky, kx), cols (y, x).
template <typename T>
void im2col3x3(const FeatureMap<T>& x, std::vector<T>& col) {
  const std::size_t hw = x.plane();
  col.assign(x.c * 9 * hw, T(0));
  const auto H = static_cast<long long>(x.h), W = static_cast<long long>(x.w);
  for (std::size_t ci = 0; ci < x.c; ++ci) {
    const T* src = x.channel(ci);
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        T* dst = col.data() + ((ci * 9) + static_cast<std::size_t>(ky * 3 + kx)) * hw;
        const long long dx = kx - 1;
        const long long x0 = std::max(0LL, -dx), x1 = std::min(W, W - dx);
        for (long long y = 0; y < H; ++y) {
          const long long sy = y + ky - 1;
          if (sy < 0 || sy >= H) continue;
          const T* s = src + sy * W;
          T* d = dst + y * W;
          for (long long xx = x0; xx < x1; ++xx) d[xx] = s[xx + dx];
        }
      }
  }
}

template <typename T>
void col2im3x3(const std::vector<T>& col, FeatureMap<T>& dx) {
  const std::size_t hw = dx.plane();
  const auto H = static_cast<long long>(dx.h), W = static_cast<long long>(dx.w);
  for (std::size_t ci = 0; ci < dx.c; ++ci) {
    T* dst = dx.channel(ci);
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const T* src = col.data() + ((ci * 9) + static_cast<std::size_t>(ky * 3 + kx)) * hw;
        const long long ddx = kx - 1;
        const long long x0 = std::max(0LL, -ddx), x1 = std::min(W, W - ddx);
        for (long long y = 0; y < H; ++y) {
          const long long sy = y + ky - 1;
          if (sy < 0 || sy >= H) continue;
          T* d = dst + sy * W;
          const T* s = src + y * W;
          for (long long xx = x0; xx < x1; ++xx) d[xx + ddx] += s[xx];
        }
      }
  }
}

template <typename T>
struct Conv3x3 {
  std::size_t cin = 0, cout = 0;
  std::size_t weight = 0, bias = 0;  // indices into the parameter list

  struct Cache {
    std::vector<T> col;
    std::size_t h = 0, w = 0;
  };

  FeatureMap<T> forward(const std::vector<Param<T>>& p, const FeatureMap<T>& x, Cache* cache) const {
    std::vector<T> local;
    std::vector<T>& col = cache ? cache->col : local;
    im2col3x3(x, col);
    FeatureMap<T> y(cout, x.h, x.w);
    auto Y = as_matrix(y);
    Y.noalias() = as_matrix(p[weight].value, cout, cin * 9) * as_matrix(col, cin * 9, x.plane());
    for (std::size_t k = 0; k < cout; ++k) {
      T* ch = y.channel(k);
      const T b = p[bias].value[k];
      for (std::size_t i = 0; i < y.plane(); ++i) ch[i] += b;
    }
    if (cache) {
      cache->h = x.h;
      cache->w = x.w;
    }
    return y;
  }

  FeatureMap<T> backward(const std::vector<Param<T>>& p, const Cache& cache, const FeatureMap<T>& dy, Gradients<T>& g) const {
    const std::size_t hw = cache.h * cache.w;
    auto dY = as_matrix(dy);
    as_matrix(g.g[weight], cout, cin * 9).noalias() += dY * as_matrix(cache.col, cin * 9, hw).transpose();
    for (std::size_t k = 0; k < cout; ++k) {
      const T* ch = dy.channel(k);
      double s = 0;
      for (std::size_t i = 0; i < hw; ++i) s += ch[i];
      g.g[bias][k] += static_cast<T>(s);
    }
    std::vector<T> dcol(cin * 9 * hw);
    as_matrix(dcol, cin * 9, hw).noalias() = as_matrix(p[weight].value, cout, cin * 9).transpose() * dY;
    FeatureMap<T> dx(cin, cache.h, cache.w);
    col2im3x3(dcol, dx);
    return dx;
  }
};

// ------------------------------------------------------------ conv 1x1 ---

template <typename T>
struct Conv1x1 {
  std::size_t cin = 0, cout = 0;
  std::size_t weight = 0, bias = 0;

  FeatureMap<T> forward(const std::vector<Param<T>>& p, const FeatureMap<T>& x) const {
    FeatureMap<T> y(cout, x.h, x.w);
    as_matrix(y).noalias() = as_matrix(p[weight].value, cout, cin) * as_matrix(x);
    for (std::size_t k = 0; k < cout; ++k) {
      T* ch = y.channel(k);
      for (std::size_t i = 0; i < y.plane(); ++i) ch[i] += p[bias].value[k];
    }
    return y;
  }

  FeatureMap<T> backward(const std::vector<Param<T>>& p, const FeatureMap<T>& x, const FeatureMap<T>& dy, Gradients<T>& g) const {
    as_matrix(g.g[weight], cout, cin).noalias() += as_matrix(dy) * as_matrix(x).transpose();
    for (std::size_t k = 0; k < cout; ++k) {
      double s = 0;
      for (std::size_t i = 0; i < dy.plane(); ++i) s += dy.channel(k)[i];
      g.g[bias][k] += static_cast<T>(s);
    }
    FeatureMap<T> dx(cin, x.h, x.w);
    as_matrix(dx).noalias() = as_matrix(p[weight].value, cout, cin).transpose() * as_matrix(dy);
    return dx;
  }
};

// ------------------------------------------------- transposed conv 2x2/2 ---

/// Weight layout (cout * 4, cin): row (co * 4 + a * 2 + b) feeds output pixel
/// (2y + a, 2x + b).
template <typename T>
struct UpConv2x2 {
  std::size_t cin = 0, cout = 0;
  std::size_t weight = 0, bias = 0;

  FeatureMap<T> forward(const std::vector<Param<T>>& p, const FeatureMap<T>& x) const {
    std::vector<T> z(cout * 4 * x.plane());
    as_matrix(z, cout * 4, x.plane()).noalias() = as_matrix(p[weight].value, cout * 4, cin) * as_matrix(x);
    FeatureMap<T> y(cout, x.h * 2, x.w * 2);
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t b = 0; b < 2; ++b) {
          const T* src = z.data() + (co * 4 + a * 2 + b) * x.plane();
          const T bias_v = p[bias].value[co];
          for (std::size_t yy = 0; yy < x.h; ++yy)
            for (std::size_t xx = 0; xx < x.w; ++xx) y.at(co, 2 * yy + a, 2 * xx + b) = src[yy * x.w + xx] + bias_v;
        }
    return y;
  }

  FeatureMap<T> backward(const std::vector<Param<T>>& p, const FeatureMap<T>& x, const FeatureMap<T>& dy, Gradients<T>& g) const {
    std::vector<T> dz(cout * 4 * x.plane());
    for (std::size_t co = 0; co < cout; ++co) {
      double s = 0;
      for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t b = 0; b < 2; ++b) {
          T* dst = dz.data() + (co * 4 + a * 2 + b) * x.plane();
          for (std::size_t yy = 0; yy < x.h; ++yy)
            for (std::size_t xx = 0; xx < x.w; ++xx) {
              const T v = dy.at(co, 2 * yy + a, 2 * xx + b);
              dst[yy * x.w + xx] = v;
              s += v;
            }
        }
      g.g[bias][co] += static_cast<T>(s);
    }
    auto dZ = as_matrix(dz, cout * 4, x.plane());
    as_matrix(g.g[weight], cout * 4, cin).noalias() += dZ * as_matrix(x).transpose();
    FeatureMap<T> dx(cin, x.h, x.w);
    as_matrix(dx).noalias() = as_matrix(p[weight].value, cout * 4, cin).transpose() * dZ;
    return dx;
  }
};

// ------------------------------------------------------- pointwise ops ---

template <typename T>
void relu_inplace(FeatureMap<T>& x) {
  for (T& v : x.v) v = v > T(0) ? v : T(0);
}

/// dy masked by the post-activation output (y > 0).
template <typename T>
FeatureMap<T> relu_backward(const FeatureMap<T>& y, FeatureMap<T> dy) {
  for (std::size_t i = 0; i < dy.v.size(); ++i)
    if (!(y.v[i] > T(0))) dy.v[i] = T(0);
  return dy;
}

template <typename T>
T sigmoid(T z) { return z >= 0 ? T(1) / (T(1) + std::exp(-z)) : std::exp(z) / (T(1) + std::exp(z)); }

// -------------------------------------------------------------- pooling ---

struct MaxPoolCache {
  std::vector<std::uint32_t> argmax;  // flat input index per output element
  std::size_t c = 0, h = 0, w = 0;    // input dims
};

template <typename T>
FeatureMap<T> maxpool2x2(const FeatureMap<T>& x, MaxPoolCache* cache) {
  FeatureMap<T> y(x.c, x.h / 2, x.w / 2);
  if (cache) {
    cache->argmax.assign(y.v.size(), 0);
    cache->c = x.c;
    cache->h = x.h;
    cache->w = x.w;
  }
  for (std::size_t k = 0; k < x.c; ++k)
    for (std::size_t yy = 0; yy < y.h; ++yy)
      for (std::size_t xx = 0; xx < y.w; ++xx) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t bi = 0;
        for (std::size_t a = 0; a < 2; ++a)
          for (std::size_t b = 0; b < 2; ++b) {
            const std::size_t idx = (k * x.h + 2 * yy + a) * x.w + 2 * xx + b;
            if (x.v[idx] > best) {
              best = x.v[idx];
              bi = idx;
            }
          }
        const std::size_t o = (k * y.h + yy) * y.w + xx;
        y.v[o] = best;
        if (cache) cache->argmax[o] = static_cast<std::uint32_t>(bi);
      }
  return y;
}

template <typename T>
FeatureMap<T> maxpool2x2_backward(const MaxPoolCache& cache, const FeatureMap<T>& dy) {
  FeatureMap<T> dx(cache.c, cache.h, cache.w);
  for (std::size_t o = 0; o < dy.v.size(); ++o) dx.v[cache.argmax[o]] += dy.v[o];
  return dx;
}

// --------------------------------------------------------------- concat ---

template <typename T>
FeatureMap<T> concat_channels(const FeatureMap<T>& a, const FeatureMap<T>& b) {
  if (a.h != b.h || a.w != b.w) throw ShapeError("concat_channels: spatial dims differ");
  FeatureMap<T> y(a.c + b.c, a.h, a.w);
  std::copy(a.v.begin(), a.v.end(), y.v.begin());
  std::copy(b.v.begin(), b.v.end(), y.v.begin() + static_cast<long long>(a.v.size()));
  return y;
}

template <typename T>
void split_channels(const FeatureMap<T>& dy, std::size_t ca, FeatureMap<T>& da, FeatureMap<T>& db) {
  da = FeatureMap<T>(ca, dy.h, dy.w);
  db = FeatureMap<T>(dy.c - ca, dy.h, dy.w);
  std::copy(dy.v.begin(), dy.v.begin() + static_cast<long long>(da.v.size()), da.v.begin());
  std::copy(dy.v.begin() + static_cast<long long>(da.v.size()), dy.v.end(), db.v.begin());
}

}  // namespace abench::nn
