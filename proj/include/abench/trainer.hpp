// SPDX-License-Identifier: Apache-2.0
#pragma once

// Self-supervised version-to-version training. Inputs and targets are two
// distinct aberrated versions of one scene in the network domain; the loss
// moves from the B-mode loss to the RF MSE as training proceeds.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "abench/bmode_pipeline.hpp"
#include "abench/core/errors.hpp"
#include "abench/core/parallel.hpp"
#include "abench/core/rng.hpp"
#include "abench/core/tensor_io.hpp"
#include "abench/losses.hpp"
#include "abench/nn/adam.hpp"
#include "abench/nn/unet.hpp"

namespace abench {

using Network = nn::UNet<float>;

// ------------------------------------------------------------- dataset ---

/// Realizations of V aberrated versions each, already in the network domain.
struct AberrationDataset {
  std::vector<std::vector<NetTensor>> realizations;
  double lambda = 1.0;

  std::size_t size() const { return realizations.size(); }
  std::size_t rows() const { return realizations.at(0).at(0).data.dim(0); }
  std::size_t cols() const { return realizations.at(0).at(0).data.dim(1); }

  std::vector<std::size_t> version_counts() const {
    std::vector<std::size_t> v;
    for (const auto& r : realizations) v.push_back(r.size());
    return v;
  }

  void validate() const {
    if (realizations.empty()) throw DataError("AberrationDataset: no realizations");
    const auto dims = realizations[0].empty() ? Array2D<float>::Shape{} : realizations[0][0].data.dims();
    for (const auto& r : realizations) {
      if (r.size() < 2) throw DataError("AberrationDataset: every realization needs at least 2 versions");
      for (const auto& t : r)
        if (t.data.dims() != dims) throw ShapeError("AberrationDataset: versions differ in shape");
    }
  }
};

/// Builds a dataset from beamformed versions with a shared lambda.
inline AberrationDataset make_dataset(const std::vector<std::vector<RfImage>>& images, double lambda) {
  AberrationDataset ds;
  ds.lambda = lambda;
  for (const auto& r : images) {
    std::vector<NetTensor> versions;
    for (const auto& im : r) versions.push_back(to_net_domain(im, lambda));
    ds.realizations.push_back(std::move(versions));
  }
  ds.validate();
  return ds;
}

// ------------------------------------------------------------- pairing ---

/// per_realization: one random pair per realization per epoch.
/// per_version: every version is the input once per epoch, paired with a
/// random distinct target.
enum class PairingMode { per_realization, per_version };

struct VersionPair {
  std::size_t realization = 0, input = 0, target = 0;
  bool operator==(const VersionPair&) const = default;
};

/// Pairs are deterministic per (seed, epoch) and shuffled within the epoch.
inline std::vector<VersionPair> sample_pairs(std::span<const std::size_t> versions, std::uint64_t seed,
                                             std::size_t epoch, PairingMode mode = PairingMode::per_realization) {
  auto rng = CounterRng::stream(seed, 0x70616972 /* "pair" */, epoch);
  std::vector<VersionPair> out;
  for (std::size_t r = 0; r < versions.size(); ++r) {
    const std::size_t v = versions[r];
    if (v < 2) throw DataError("sample_pairs: realization " + std::to_string(r) + " has fewer than 2 versions");
    auto distinct_from = [&](std::size_t a) {
      std::size_t b = rng.below(v - 1);
      return b >= a ? b + 1 : b;
    };
    if (mode == PairingMode::per_realization) {
      const std::size_t a = rng.below(v);
      out.push_back({r, a, distinct_from(a)});
    } else {
      for (std::size_t a = 0; a < v; ++a) out.push_back({r, a, distinct_from(a)});
    }
  }
  for (std::size_t i = out.size(); i > 1; --i) std::swap(out[i - 1], out[rng.below(i)]);
  return out;
}

inline std::vector<VersionPair> sample_pairs(const AberrationDataset& ds, std::uint64_t seed, std::size_t epoch,
                                             PairingMode mode = PairingMode::per_realization) {
  const auto counts = ds.version_counts();
  return sample_pairs(counts, seed, epoch, mode);
}

// -------------------------------------------------------------- config ---

enum class LossKind { adaptive_mixed, mse, bmode };

struct RowRange {
  std::size_t begin = 0, end = 0;  // end == 0 means "to the last row"
  std::size_t resolve_end(std::size_t rows) const { return end == 0 ? rows : std::min(end, rows); }
};

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 4;
  double lr_initial = 1e-3;
  std::vector<std::size_t> lr_halving_epochs{20, 40, 60, 160};
  std::uint64_t seed = 1;
  nn::UNetConfig net{};
  std::size_t patch_rows = 64;
  PairingMode pairing = PairingMode::per_realization;
  LossKind loss = LossKind::adaptive_mixed;
  bool hold_out_last = true;           // last version of each realization is never trained on
  std::size_t validation_patches = 4;  // fixed patches per realization, 0 disables validation
  RowRange rows{};

  /// Full-scale schedule: 5000 epochs, batch 32, halving at 500/1000/1500/4000.
  static TrainConfig full_scale() {
    TrainConfig c;
    c.epochs = 5000;
    c.batch_size = 32;
    c.lr_halving_epochs = {500, 1000, 1500, 4000};
    return c;
  }

  void validate() const {
    if (epochs < 1) throw RangeError("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw RangeError("TrainConfig: batch_size must be >= 1");
    if (!(lr_initial > 0)) throw RangeError("TrainConfig: lr_initial must be positive");
    for (std::size_t i = 0; i < lr_halving_epochs.size(); ++i) {
      if (lr_halving_epochs[i] >= epochs) throw RangeError("TrainConfig: halving epoch beyond training length");
      if (i && lr_halving_epochs[i] <= lr_halving_epochs[i - 1])
        throw RangeError("TrainConfig: halving epochs must be strictly increasing");
    }
    if (patch_rows == 0 || patch_rows % net.divisor()) throw RangeError("TrainConfig: patch_rows must be a multiple of the network divisor");
    net.validate();
  }

  /// Learning rate in effect during 0-indexed `epoch`.
  double lr_at(std::size_t epoch) const {
    double lr = lr_initial;
    for (auto h : lr_halving_epochs)
      if (epoch >= h) lr *= 0.5;
    return lr;
  }
};

/// Continuation at a constant low rate for a fraction of the original length.
struct FinetuneConfig {
  double lr = 5e-5;
  double epoch_fraction = 0.2;
  bool freeze_alpha = false;  // hold alpha at 1 instead of continuing the schedule
  RowRange rows{};

  std::size_t epochs_for(std::size_t original) const {
    return static_cast<std::size_t>(std::llround(epoch_fraction * static_cast<double>(original)));
  }
};

// ------------------------------------------------------------- history ---

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0, bmode = 0, mse = 0;
  double alpha = 0, lr = 0;
  double val_bmode = std::numeric_limits<double>::quiet_NaN();
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  void write_csv(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    os.precision(10);
    os << "epoch,loss,alpha,lr,bmode,mse,val_bmode\n";
    for (const auto& e : epochs)
      os << e.epoch << ',' << e.loss << ',' << e.alpha << ',' << e.lr << ',' << e.bmode << ',' << e.mse << ','
         << e.val_bmode << '\n';
  }
};

// --------------------------------------------------------------- model ---

struct Model {
  Network net;
  nn::Adam<float> adam;
  double lambda = 1.0;
  std::size_t epochs_trained = 0;   // main-schedule epochs
  std::size_t finetune_epochs = 0;  // epochs run at the fine-tune rate
  double alpha = 0;                 // last alpha used

  Model() : adam(net.params()) {}
  Model(const nn::UNetConfig& cfg, std::uint64_t seed, double lambda_)
      : net(cfg, seed), adam(net.params()), lambda(lambda_) {}
};

namespace detail {

inline nn::FeatureMap<float> patch_of(const NetTensor& t, std::size_t row0, std::size_t rows) {
  const std::size_t cols = t.data.dim(1);
  nn::FeatureMap<float> f(1, rows, cols);
  std::copy_n(t.data.data() + row0 * cols, rows * cols, f.v.begin());
  return f;
}

inline Array2D<double> widen(const nn::FeatureMap<float>& f) {
  Array2D<double> a({f.h, f.w});
  std::copy(f.v.begin(), f.v.end(), a.flat().begin());
  return a;
}

struct ItemResult {
  double value = 0, bmode = 0, mse = 0;
};

/// Loss and accumulated gradient for one (input, target) patch.
inline ItemResult train_item(const Network& net, const nn::FeatureMap<float>& x, const NetTransform& x_meta,
                             const nn::FeatureMap<float>& t, const NetTransform& t_meta, LossKind kind,
                             const LossContext& ctx, nn::Gradients<float>& g) {
  Network::Tape tape;
  const auto y = net.forward(x, &tape);
  const auto yd = widen(y);
  const auto td = widen(t);
  ItemResult r;
  Array2D<double> grad;
  if (kind == LossKind::adaptive_mixed) {
    auto l = loss_adaptive_mixed(td, t_meta, yd, x_meta, ctx);
    r = {l.value, l.bmode, l.mse};
    grad = std::move(l.grad);
  } else if (kind == LossKind::mse) {
    auto l = loss_mse(td, yd);
    r = {l.value, std::numeric_limits<double>::quiet_NaN(), l.value};
    grad = std::move(l.grad);
  } else {
    auto l = loss_bmode(td, t_meta, yd, x_meta);
    r = {l.value, l.value, std::numeric_limits<double>::quiet_NaN()};
    grad = std::move(l.grad);
  }
  if (!std::isfinite(r.value)) throw DivergenceError("training loss is not finite");
  nn::FeatureMap<float> dy(1, y.h, y.w);
  for (std::size_t i = 0; i < dy.v.size(); ++i) dy.v[i] = static_cast<float>(grad.flat()[i]);
  net.backward(tape, dy, g);
  return r;
}

struct Schedule {
  std::function<LossContext(std::size_t)> context;
  std::function<double(std::size_t)> lr;
};

/// Mean B-mode loss over fixed patches mapping the held-out version to version 0.
inline double validation_loss(const Network& net, const AberrationDataset& ds, std::size_t patch_rows,
                              std::size_t patches, RowRange rows) {
  const std::size_t r0 = rows.begin, r1 = rows.resolve_end(ds.rows());
  if (patches == 0 || r1 < r0 + patch_rows) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0;
  std::size_t n = 0;
  for (const auto& real : ds.realizations) {
    if (real.size() < 3) continue;
    const auto& in = real.back();
    const auto& tg = real.front();
    for (std::size_t p = 0; p < patches; ++p) {
      const std::size_t span = r1 - r0 - patch_rows;
      const std::size_t row = r0 + (patches > 1 ? span * p / (patches - 1) : span / 2);
      const auto y = net.forward(patch_of(in, row, patch_rows));
      sum += loss_bmode(widen(patch_of(tg, row, patch_rows)), tg.meta, widen(y), in.meta).value;
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

/// Runs `epochs` epochs, numbering them from `first_epoch` for pairing and
/// patch draws.
inline TrainHistory run_epochs(Model& model, const AberrationDataset& ds, const TrainConfig& cfg,
                               std::size_t first_epoch, std::size_t epochs, const Schedule& sched, RowRange rows,
                               const std::function<void(const EpochRecord&)>& progress) {
  ds.validate();
  const std::size_t r0 = rows.begin, r1 = rows.resolve_end(ds.rows());
  if (r1 < r0 + cfg.patch_rows) throw RangeError("training row range is shorter than one patch");
  if (ds.cols() % cfg.net.divisor()) throw ShapeError("dataset width not divisible by the network divisor");

  auto counts = ds.version_counts();
  if (cfg.hold_out_last)
    for (auto& c : counts) {
      if (c < 3) throw DataError("holding out a version needs at least 3 versions per realization");
      --c;
    }

  TrainHistory hist;
  for (std::size_t k = 0; k < epochs; ++k) {
    const std::size_t epoch = first_epoch + k;
    const LossContext ctx = sched.context(k);
    const double lr = sched.lr(k);
    const auto pairs = sample_pairs(counts, cfg.seed, epoch, cfg.pairing);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.alpha = cfg.loss == LossKind::adaptive_mixed ? ctx.alpha() : (cfg.loss == LossKind::mse ? 1.0 : 0.0);
    rec.lr = lr;
    std::vector<ItemResult> results(pairs.size());
    for (std::size_t b0 = 0; b0 < pairs.size(); b0 += cfg.batch_size) {
      const std::size_t nb = std::min(cfg.batch_size, pairs.size() - b0);
      std::vector<nn::Gradients<float>> grads(nb, nn::Gradients<float>(model.net.params()));
      parallel_for(0, nb, [&](std::size_t i) {
        const auto& pr = pairs[b0 + i];
        auto rng = CounterRng::stream(cfg.seed, 0x70746368 /* "ptch" */, (epoch << 20) + b0 + i);
        const std::size_t row = r0 + rng.below(r1 - r0 - cfg.patch_rows + 1);
        const auto& in = ds.realizations[pr.realization][pr.input];
        const auto& tg = ds.realizations[pr.realization][pr.target];
        results[b0 + i] = train_item(model.net, patch_of(in, row, cfg.patch_rows), in.meta,
                                     patch_of(tg, row, cfg.patch_rows), tg.meta, cfg.loss, ctx, grads[i]);
      });
      nn::Gradients<float> total(model.net.params());
      for (const auto& g : grads) total.add(g, 1.0f / static_cast<float>(nb));
      model.adam.step(model.net.params(), total, lr);
    }
    for (const auto& r : results) {
      rec.loss += r.value;
      rec.bmode += r.bmode;
      rec.mse += r.mse;
    }
    const auto n = static_cast<double>(results.size());
    rec.loss /= n;
    rec.bmode /= n;
    rec.mse /= n;
    if (cfg.loss == LossKind::adaptive_mixed && ctx.current_epoch == 0 && rec.loss != rec.bmode)
      throw DivergenceError("mixed loss at alpha 0 differs from the B-mode loss");
    if (cfg.hold_out_last) rec.val_bmode = validation_loss(model.net, ds, cfg.patch_rows, cfg.validation_patches, rows);
    model.alpha = rec.alpha;
    hist.epochs.push_back(rec);
    if (progress) progress(rec);
  }
  return hist;
}

}  // namespace detail

struct TrainResult {
  Model model;
  TrainHistory history;
};

inline TrainResult train(const AberrationDataset& ds, const TrainConfig& cfg,
                         const std::function<void(const EpochRecord&)>& progress = {}) {
  cfg.validate();
  TrainResult res{Model(cfg.net, cfg.seed, ds.lambda), {}};
  detail::Schedule sched{[&](std::size_t e) { return LossContext{e, cfg.epochs}; },
                         [&](std::size_t e) { return cfg.lr_at(e); }};
  res.history = detail::run_epochs(res.model, ds, cfg, 0, cfg.epochs, sched, cfg.rows, progress);
  res.model.epochs_trained = cfg.epochs;
  return res;
}

/// Continues training at the fine-tune rate. With the schedule continuing,
/// alpha at fine-tune epoch k is (E + k) / (E + F) for E original and F
/// fine-tune epochs.
inline TrainHistory finetune(Model& model, const AberrationDataset& ds, const TrainConfig& cfg,
                             const FinetuneConfig& ft = {},
                             const std::function<void(const EpochRecord&)>& progress = {}) {
  cfg.validate();
  if (model.epochs_trained == 0) throw DataError("finetune: model has not been trained");
  if (!(ft.lr > 0)) throw RangeError("finetune: lr must be positive");
  const std::size_t E = model.epochs_trained;
  const std::size_t F = ft.epochs_for(E);
  if (F == 0) return {};
  detail::Schedule sched{[&](std::size_t k) {
                           return ft.freeze_alpha ? LossContext{1, 1} : LossContext{E + k, E + F};
                         },
                         [&](std::size_t) { return ft.lr; }};
  auto hist = detail::run_epochs(model, ds, cfg, E + model.finetune_epochs, F, sched, ft.rows, progress);
  model.finetune_epochs += F;
  return hist;
}

// ----------------------------------------------------------- inference ---

namespace detail {

inline std::size_t reflect(long long i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<long long>(2 * (n - 1));
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < static_cast<long long>(n) ? i : period - i);
}

inline std::size_t round_up(std::size_t v, std::size_t m) { return (v + m - 1) / m * m; }

/// Image rows [0, rows) and columns [0, cols), extended by reflection.
inline nn::FeatureMap<float> padded(const Array2D<float>& a, std::size_t rows, std::size_t cols) {
  nn::FeatureMap<float> f(1, rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      f.at(0, r, c) = a(reflect(static_cast<long long>(r), a.dim(0)), reflect(static_cast<long long>(c), a.dim(1)));
  return f;
}

inline nn::FeatureMap<float> window_rows(const nn::FeatureMap<float>& f, std::size_t r0, std::size_t r1) {
  nn::FeatureMap<float> w(1, r1 - r0, f.w);
  std::copy_n(f.v.begin() + static_cast<long long>(r0 * f.w), w.v.size(), w.v.begin());
  return w;
}

}  // namespace detail

/// Whole-image inference. The input is reflect-padded to the network divisor
/// and the output cropped back; the output keeps the input's transform.
inline NetTensor infer(const Network& net, const NetTensor& in) {
  const std::size_t H = in.data.dim(0), W = in.data.dim(1), d = net.config().divisor();
  const auto x = detail::padded(in.data, detail::round_up(H, d), detail::round_up(W, d));
  const auto y = net.forward(x);
  NetTensor out{Array2D<float>({H, W}), in.meta, in.grid};
  for (std::size_t r = 0; r < H; ++r)
    for (std::size_t c = 0; c < W; ++c) out.data(r, c) = y.at(0, r, c);
  return out;
}

struct Section {
  std::size_t begin = 0, end = 0;
};

/// Axial split into sections that share an overlap band around each cut.
struct DepthPartition {
  std::size_t n_sections = 3;
  double overlap_fraction = 0.03;

  std::size_t overlap_rows(std::size_t rows) const {
    return static_cast<std::size_t>(std::llround(overlap_fraction * static_cast<double>(rows)));
  }

  /// Cut k sits at round(k * rows / n); its band starts floor(o / 2) above it.
  std::vector<Section> sections(std::size_t rows) const {
    if (n_sections < 1) throw RangeError("DepthPartition: need at least one section");
    const std::size_t o = overlap_rows(rows);
    std::vector<Section> s(n_sections);
    for (std::size_t k = 0; k < n_sections; ++k) {
      s[k].begin = k == 0 ? 0 : band_start(rows, k);
      s[k].end = k + 1 == n_sections ? rows : band_start(rows, k + 1) + o;
    }
    for (const auto& sec : s)
      if (sec.end <= sec.begin || sec.end > rows) throw RangeError("DepthPartition: image too short to partition");
    return s;
  }

  std::size_t band_start(std::size_t rows, std::size_t cut) const {
    const auto c = static_cast<std::size_t>(
        std::llround(static_cast<double>(cut) * static_cast<double>(rows) / static_cast<double>(n_sections)));
    return c - overlap_rows(rows) / 2;
  }

  /// Weight of the upper section at offset i into a band of o rows; the lower
  /// section gets the complement.
  static double upper_weight(std::size_t i, std::size_t o) {
    if (o <= 1) return 0.5;
    return 1.0 - static_cast<double>(i) / static_cast<double>(o - 1);
  }
};

struct PartitionedOutput {
  NetTensor net;               // stitched network output
  RfImage rf;                  // stitched RF, nearer section inside each band
  Array2D<double> envelope;    // per-section envelopes blended across bands
};

/// Runs one model per depth section. Each section is evaluated on a window
/// that extends `halo` rows past it (aligned to the network divisor) so
/// interior outputs match whole-image inference.
inline PartitionedOutput infer_partitioned(std::span<const Network* const> models, const DepthPartition& part,
                                           const NetTensor& in, std::size_t halo = 32) {
  if (models.size() != part.n_sections)
    throw ShapeError("infer_partitioned: " + std::to_string(models.size()) + " models for " +
                     std::to_string(part.n_sections) + " sections");
  const std::size_t H = in.data.dim(0), W = in.data.dim(1);
  const std::size_t d = models[0]->config().divisor();
  for (const auto* m : models)
    if (m->config().divisor() != d) throw ShapeError("infer_partitioned: section models differ in depth");
  const auto secs = part.sections(H);
  const std::size_t o = part.overlap_rows(H);
  const std::size_t Hp = detail::round_up(H, d), Wp = detail::round_up(W, d);
  const auto x = detail::padded(in.data, Hp, Wp);

  std::vector<Array2D<float>> outs;
  for (std::size_t k = 0; k < secs.size(); ++k) {
    const std::size_t w0 = secs[k].begin > halo ? (secs[k].begin - halo) / d * d : 0;
    const std::size_t w1 = std::min(Hp, detail::round_up(secs[k].end + halo, d));
    const auto y = models[k]->forward(detail::window_rows(x, w0, w1));
    Array2D<float> sec({secs[k].end - secs[k].begin, W});
    for (std::size_t r = secs[k].begin; r < secs[k].end; ++r)
      for (std::size_t c = 0; c < W; ++c) sec(r - secs[k].begin, c) = y.at(0, r - w0, c);
    outs.push_back(std::move(sec));
  }

  // Owner of each row: the nearer section inside bands.
  std::vector<std::size_t> owner(H, 0);
  for (std::size_t k = 0; k < secs.size(); ++k) {
    const std::size_t lo = k == 0 ? 0 : secs[k].begin + (o + 1) / 2;
    for (std::size_t r = lo; r < H; ++r) owner[r] = k;
  }

  PartitionedOutput res{NetTensor{Array2D<float>({H, W}), in.meta, in.grid}, {}, Array2D<double>({H, W}, 0.0)};
  for (std::size_t r = 0; r < H; ++r)
    for (std::size_t c = 0; c < W; ++c) res.net.data(r, c) = outs[owner[r]](r - secs[owner[r]].begin, c);
  res.rf = from_net_domain(res.net);

  // Envelope of section k: the stitched RF with section k's own rows swapped in.
  std::vector<Array2D<double>> envs;
  for (std::size_t k = 0; k < secs.size(); ++k) {
    RfImage comp = res.rf;
    for (std::size_t r = secs[k].begin; r < secs[k].end; ++r)
      for (std::size_t c = 0; c < W; ++c)
        comp.data(r, c) = static_cast<float>(in.meta.inverse(outs[k](r - secs[k].begin, c)));
    envs.push_back(envelope_of(comp.data));
  }
  for (std::size_t r = 0; r < H; ++r) {
    std::size_t upper = owner[r], lower = owner[r];
    double wu = 1.0;
    for (std::size_t k = 1; k < secs.size(); ++k)
      if (r >= secs[k].begin && r < secs[k - 1].end) {
        upper = k - 1;
        lower = k;
        wu = DepthPartition::upper_weight(r - secs[k].begin, o);
      }
    for (std::size_t c = 0; c < W; ++c) res.envelope(r, c) = wu * envs[upper](r, c) + (1.0 - wu) * envs[lower](r, c);
  }
  return res;
}

// ---------------------------------------------------------- checkpoint ---

// Layout: magic "ABCKPT1\n", u64 header length, JSON header, then one tensor
// record per parameter followed by the Adam first and second moments in the
// same order.

inline constexpr char kCheckpointMagic[8] = {'A', 'B', 'C', 'K', 'P', 'T', '1', '\n'};

inline void save_checkpoint(const std::filesystem::path& path, Model& model, const nlohmann::json& extra = {}) {
  const auto& params = model.net.params();
  nlohmann::json hdr;
  hdr["architecture"] = {{"kind", "unet"},
                         {"levels", model.net.config().levels},
                         {"base_width", model.net.config().base_width},
                         {"parameters", model.net.parameter_count()}};
  hdr["transform"] = {{"lambda", model.lambda}};
  hdr["epochs_trained"] = model.epochs_trained;
  hdr["finetune_epochs"] = model.finetune_epochs;
  hdr["alpha"] = model.alpha;
  hdr["adam"] = {{"steps", model.adam.steps()},
                 {"beta1", model.adam.options().beta1},
                 {"beta2", model.adam.options().beta2},
                 {"eps", model.adam.options().eps}};
  nlohmann::json names = nlohmann::json::array();
  for (const auto& p : params) names.push_back({{"name", p.name}, {"shape", p.shape}});
  hdr["params"] = names;
  if (!extra.is_null()) hdr["extra"] = extra;
  const std::string text = hdr.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os.write(kCheckpointMagic, 8);
  const std::uint64_t len = text.size();
  os.write(reinterpret_cast<const char*>(&len), 8);
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  auto put = [&](const std::vector<float>& v) {
    write_tensor(os, Array1D<float>({v.size()}, v));
  };
  for (const auto& p : params) put(p.value);
  for (const auto& m : model.adam.first_moments()) put(m);
  for (const auto& v : model.adam.second_moments()) put(v);
  if (!os) throw IoError("write failed for " + path.string());
}

inline Model load_checkpoint(const std::filesystem::path& path, nlohmann::json* header = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw DataError(path.string() + ": not a checkpoint");
  std::uint64_t len = 0;
  is.read(reinterpret_cast<char*>(&len), 8);
  if (!is || len > (1u << 26)) throw DataError(path.string() + ": bad header length");
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  const auto hdr = nlohmann::json::parse(text, nullptr, false);
  if (hdr.is_discarded()) throw DataError(path.string() + ": malformed header");

  nn::UNetConfig cfg{hdr.at("architecture").at("levels").get<std::size_t>(),
                     hdr.at("architecture").at("base_width").get<std::size_t>()};
  Model model(cfg, 0, hdr.at("transform").at("lambda").get<double>());
  model.epochs_trained = hdr.at("epochs_trained").get<std::size_t>();
  model.finetune_epochs = hdr.value("finetune_epochs", std::size_t{0});
  model.alpha = hdr.value("alpha", 0.0);
  auto& params = model.net.params();
  if (hdr.at("params").size() != params.size()) throw DataError(path.string() + ": parameter count mismatch");
  auto take = [&](std::vector<float>& dst, const std::string& what) {
    const auto raw = read_raw_tensor(is);
    if (raw.values.size() != dst.size()) throw DataError(path.string() + ": size mismatch for " + what);
    std::transform(raw.values.begin(), raw.values.end(), dst.begin(), [](double v) { return static_cast<float>(v); });
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (hdr["params"][i].at("name").get<std::string>() != params[i].name)
      throw DataError(path.string() + ": unexpected parameter " + hdr["params"][i].at("name").get<std::string>());
    take(params[i].value, params[i].name);
  }
  for (std::size_t i = 0; i < params.size(); ++i) take(model.adam.first_moments()[i], params[i].name + " m");
  for (std::size_t i = 0; i < params.size(); ++i) take(model.adam.second_moments()[i], params[i].name + " v");
  model.adam.set_steps(hdr.at("adam").at("steps").get<std::uint64_t>());
  if (header) *header = hdr;
  return model;
}

}  // namespace abench
