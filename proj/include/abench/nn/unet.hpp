// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "abench/core/errors.hpp"
#include "abench/core/rng.hpp"
#include "abench/nn/layers.hpp"
#include "abench/nn/tensor.hpp"

namespace abench::nn {

struct UNetConfig {
  std::size_t levels = 3;      // resolution levels including the bottleneck
  std::size_t base_width = 16; // channels at full resolution, doubled per level

  void validate() const {
    if (levels < 1 || levels > 6) throw RangeError("UNetConfig: levels must be in [1, 6]");
    if (base_width < 1) throw RangeError("UNetConfig: base_width must be positive");
  }
  /// Spatial dims must be divisible by this.
  std::size_t divisor() const { return std::size_t{1} << (levels - 1); }
  std::size_t width(std::size_t level) const { return base_width << level; }
};

/// Single-channel encoder-decoder with concatenated skips and a sigmoid head.
/// Each level is two 3x3 conv + ReLU; down by 2x2 max pooling, up by 2x2
/// stride-2 transposed conv.
template <typename T = float>
class UNet {
 public:
  struct Block {
    Conv3x3<T> a, b;
  };

  struct BlockTape {
    typename Conv3x3<T>::Cache ca, cb;
    FeatureMap<T> ya, yb;
  };

  /// Activations retained for one backward pass.
  struct Tape {
    std::vector<BlockTape> enc, dec;
    std::vector<MaxPoolCache> pool;
    std::vector<FeatureMap<T>> up_in;
    FeatureMap<T> head_in, out;
  };

  UNet() : UNet(UNetConfig{}, 0) {}

  UNet(const UNetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    const std::size_t L = cfg_.levels;
    for (std::size_t l = 0; l < L; ++l)
      enc_.push_back(make_block("enc" + std::to_string(l), l == 0 ? 1 : cfg_.width(l - 1), cfg_.width(l)));
    for (std::size_t l = L - 1; l-- > 0;) {
      UpConv2x2<T> u;
      u.cin = cfg_.width(l + 1);
      u.cout = cfg_.width(l);
      u.weight = add_param("up" + std::to_string(l) + ".weight", {u.cout * 4, u.cin});
      u.bias = add_param("up" + std::to_string(l) + ".bias", {u.cout});
      up_.push_back(u);
      dec_.push_back(make_block("dec" + std::to_string(l), 2 * cfg_.width(l), cfg_.width(l)));
    }
    head_.cin = cfg_.width(0);
    head_.cout = 1;
    head_.weight = add_param("head.weight", {1, head_.cin});
    head_.bias = add_param("head.bias", {1});
    initialize(seed);
  }

  const UNetConfig& config() const { return cfg_; }
  std::vector<Param<T>>& params() { return params_; }
  const std::vector<Param<T>>& params() const { return params_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  /// He-normal conv weights, zero biases.
  void initialize(std::uint64_t seed) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      const bool is_bias = p.shape.size() == 1;
      if (is_bias) {
        std::fill(p.value.begin(), p.value.end(), T(0));
        continue;
      }
      const double fan_in = static_cast<double>(p.shape[1]);
      const bool relu_follows = p.name.rfind("enc", 0) == 0 || p.name.rfind("dec", 0) == 0;
      const double sd = std::sqrt((relu_follows ? 2.0 : 1.0) / fan_in);
      auto rng = CounterRng::stream(seed, 0x756e6574 /* "unet" */, i);
      for (T& v : p.value) v = static_cast<T>(sd * rng.normal());
    }
  }

  void check_input(const FeatureMap<T>& x) const {
    if (x.c != 1) throw ShapeError("UNet: expected a single-channel input");
    if (x.h == 0 || x.w == 0 || x.h % cfg_.divisor() || x.w % cfg_.divisor())
      throw ShapeError("UNet: input " + std::to_string(x.h) + "x" + std::to_string(x.w) +
                       " not divisible by " + std::to_string(cfg_.divisor()));
  }

  /// Output in (0, 1), same shape as the input. Pass a tape to enable backward.
  FeatureMap<T> forward(const FeatureMap<T>& x, Tape* tape = nullptr) const {
    check_input(x);
    const std::size_t L = cfg_.levels;
    if (tape) {
      tape->enc.assign(L, {});
      tape->dec.assign(L - 1, {});
      tape->pool.assign(L - 1, {});
      tape->up_in.assign(L - 1, {});
    }
    std::vector<FeatureMap<T>> skips;
    FeatureMap<T> h = x;
    for (std::size_t l = 0; l < L; ++l) {
      if (l > 0) h = maxpool2x2(h, tape ? &tape->pool[l - 1] : nullptr);
      h = block_forward(enc_[l], h, tape ? &tape->enc[l] : nullptr);
      if (l + 1 < L) skips.push_back(h);
    }
    for (std::size_t d = 0; d + 1 < L; ++d) {
      const std::size_t l = L - 2 - d;
      if (tape) tape->up_in[d] = h;
      FeatureMap<T> u = up_[d].forward(params_, h);
      h = block_forward(dec_[d], concat_channels(skips[l], u), tape ? &tape->dec[d] : nullptr);
    }
    FeatureMap<T> out = head_.forward(params_, h);
    for (T& v : out.v) v = sigmoid(v);
    if (tape) {
      tape->head_in = std::move(h);
      tape->out = out;
    }
    return out;
  }

  /// Accumulates parameter gradients given dLoss/dOutput.
  void backward(const Tape& tape, const FeatureMap<T>& d_out, Gradients<T>& g) const {
    const std::size_t L = cfg_.levels;
    FeatureMap<T> dz = d_out;
    for (std::size_t i = 0; i < dz.v.size(); ++i) {
      const T y = tape.out.v[i];
      dz.v[i] *= y * (T(1) - y);
    }
    FeatureMap<T> dh = head_.backward(params_, tape.head_in, dz, g);
    std::vector<FeatureMap<T>> d_skip(L);
    for (std::size_t d = L - 1; d-- > 0;) {
      const std::size_t l = L - 2 - d;
      FeatureMap<T> dcat = block_backward(dec_[d], tape.dec[d], dh, g);
      FeatureMap<T> ds, du;
      split_channels(dcat, cfg_.width(l), ds, du);
      d_skip[l] = std::move(ds);
      dh = up_[d].backward(params_, tape.up_in[d], du, g);
    }
    for (std::size_t l = L; l-- > 0;) {
      if (l + 1 < L) {
        for (std::size_t i = 0; i < dh.v.size(); ++i) dh.v[i] += d_skip[l].v[i];
      }
      dh = block_backward(enc_[l], tape.enc[l], dh, g);
      if (l > 0) dh = maxpool2x2_backward(tape.pool[l - 1], dh);
    }
  }

 private:
  std::size_t add_param(std::string name, std::vector<std::size_t> shape) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    params_.push_back({std::move(name), std::move(shape), std::vector<T>(n, T(0))});
    return params_.size() - 1;
  }

  Block make_block(const std::string& prefix, std::size_t cin, std::size_t cout) {
    Block b;
    b.a.cin = cin;
    b.a.cout = cout;
    b.a.weight = add_param(prefix + ".a.weight", {cout, cin * 9});
    b.a.bias = add_param(prefix + ".a.bias", {cout});
    b.b.cin = cout;
    b.b.cout = cout;
    b.b.weight = add_param(prefix + ".b.weight", {cout, cout * 9});
    b.b.bias = add_param(prefix + ".b.bias", {cout});
    return b;
  }

  FeatureMap<T> block_forward(const Block& blk, const FeatureMap<T>& x, BlockTape* t) const {
    FeatureMap<T> ya = blk.a.forward(params_, x, t ? &t->ca : nullptr);
    relu_inplace(ya);
    FeatureMap<T> yb = blk.b.forward(params_, ya, t ? &t->cb : nullptr);
    relu_inplace(yb);
    if (t) {
      t->ya = std::move(ya);
      t->yb = yb;
    }
    return yb;
  }

  FeatureMap<T> block_backward(const Block& blk, const BlockTape& t, const FeatureMap<T>& dy, Gradients<T>& g) const {
    FeatureMap<T> d = blk.b.backward(params_, t.cb, relu_backward(t.yb, dy), g);
    return blk.a.backward(params_, t.ca, relu_backward(t.ya, std::move(d)), g);
  }

  UNetConfig cfg_;
  std::vector<Param<T>> params_;
  std::vector<Block> enc_, dec_;
  std::vector<UpConv2x2<T>> up_;
  Conv1x1<T> head_;
};

}  // namespace abench::nn
