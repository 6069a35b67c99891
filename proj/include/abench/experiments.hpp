// SPDX-License-Identifier: Apache-2.0
#pragma once

// Desk-scale experiments shared by `abench repro` and the acceptance suite.

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "abench/config.hpp"
#include "abench/dataset.hpp"
#include "abench/metrics.hpp"
#include "abench/trainer.hpp"

namespace abench {

using Progress = std::function<void(const std::string&)>;

struct CystEval {
  double contrast_top = 0, contrast_bottom = 0;
  double gcnr_top = 0, gcnr_bottom = 0;
  double snr = 0;

  nlohmann::json to_json() const {
    return {{"contrast_db", {{"top", contrast_top}, {"bottom", contrast_bottom}}},
            {"gcnr", {{"top", gcnr_top}, {"bottom", gcnr_bottom}}},
            {"speckle_snr", snr}};
  }
};

inline CystEval evaluate_cysts(const Array2D<double>& env, const ImageGrid& grid, const RoiSpec& top,
                               const RoiSpec& bottom) {
  return {contrast_db(env, grid, top), contrast_db(env, grid, bottom), gcnr(env, grid, top), gcnr(env, grid, bottom),
          speckle_snr(env, grid, top)};
}

inline CystEval mean_of(const std::vector<CystEval>& v) {
  CystEval m;
  for (const auto& e : v) {
    m.contrast_top += e.contrast_top;
    m.contrast_bottom += e.contrast_bottom;
    m.gcnr_top += e.gcnr_top;
    m.gcnr_bottom += e.gcnr_bottom;
    m.snr += e.snr;
  }
  const auto n = static_cast<double>(v.size());
  m.contrast_top /= n;
  m.contrast_bottom /= n;
  m.gcnr_top /= n;
  m.gcnr_bottom /= n;
  m.snr /= n;
  return m;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ----------------------------------------------------------- phantoms ---

inline FsaCube simulate_cyst(const RunConfig& cfg, std::uint64_t seed) {
  return simulate_fsa(make_cyst_test_phantom(seed, cfg.density * 1e-6), cfg.transducer, cfg.sim);
}

/// Training realization r: speckle with random inclusions.
inline FsaCube simulate_realization(const RunConfig& cfg, std::size_t r) {
  const std::uint64_t seed = mix64(cfg.seed * 0x10001 + r + 1);
  auto ph = make_speckle_phantom(cfg.phantom, cfg.density * 1e-6, random_inclusions(seed, cfg.phantom, cfg.inclusions),
                                 seed);
  return simulate_fsa(ph, cfg.transducer, cfg.sim);
}

// ------------------------------------------------------- degradation ---

struct DegradationResult {
  CystEval clean;
  CystEval aberrated;  // mean over profiles
  std::vector<CystEval> per_profile;

  nlohmann::json to_json() const {
    nlohmann::json p = nlohmann::json::array();
    for (const auto& e : per_profile) p.push_back(e.to_json());
    return {{"clean", clean.to_json()}, {"aberrated_mean", aberrated.to_json()}, {"per_profile", p}};
  }
};

/// Clean image versus `n_profiles` images at fixed RMS with FWHM drawn from
/// the configured range. The same screen is applied on transmit and receive.
inline DegradationResult aberration_degradation(const FsaCube& cube, const RunConfig& cfg, std::size_t n_profiles,
                                                double rms, std::uint64_t seed) {
  const auto grid = cfg.image_grid();
  const auto zero = AberrationProfile::zeros(cube.n_elements(), cube.xducer.pitch);
  DegradationResult res;
  res.clean = evaluate_cysts(envelope(aberrated_image(cube, zero, zero, grid, cfg.beamform)), grid, cfg.roi_top,
                             cfg.roi_bottom);
  VersionOptions vo = cfg.versions;
  vo.ranges.rms_min = vo.ranges.rms_max = rms;
  vo.beamform = cfg.beamform;
  const auto versions = make_aberrated_versions(cube, n_profiles, seed, grid, vo);
  for (const auto& v : versions)
    res.per_profile.push_back(evaluate_cysts(envelope(v.image), grid, cfg.roi_top, cfg.roi_bottom));
  res.aberrated = mean_of(res.per_profile);
  return res;
}

// ------------------------------------------------------------- pilot ---

struct PilotResult {
  CystEval input, mixed, mse;  // held-out version, laterally downsampled grid
  TrainHistory mixed_history, mse_history;
  double seconds = 0;

  nlohmann::json to_json() const {
    return {{"held_out_input", input.to_json()},
            {"adaptive_mixed_output", mixed.to_json()},
            {"mse_output", mse.to_json()},
            {"seconds", seconds}};
  }
};

/// One scene, V versions, the last held out. Every training version is
/// mapped to a random other version each epoch. Trains the adaptive mixed
/// loss and the RF MSE loss from the same initialization.
inline PilotResult run_pilot(const FsaCube& cube, const RunConfig& cfg, const Progress& progress = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto grid = cfg.image_grid();
  VersionOptions vo = cfg.versions;
  vo.beamform = cfg.beamform;
  const auto versions = make_aberrated_versions(cube, cfg.version_count, mix64(cfg.seed + 0x70696c6f), grid, vo);
  std::vector<std::vector<RfImage>> images(1);
  std::vector<const RfImage*> fit;
  for (std::size_t v = 0; v < versions.size(); ++v) {
    images[0].push_back(versions[v].image);
    if (v + 1 < versions.size()) fit.push_back(&versions[v].image);
  }
  const auto ds = make_dataset(images, fit_lambda(fit));
  if (progress) progress("pilot: lambda " + std::to_string(ds.lambda));

  TrainConfig tc = cfg.train;
  tc.pairing = PairingMode::per_version;
  tc.hold_out_last = true;
  const auto& held = ds.realizations[0].back();
  const auto dgrid = held.grid;
  auto eval = [&](const NetTensor& t) {
    return evaluate_cysts(envelope_of(from_net_domain(t).data), dgrid, cfg.roi_top, cfg.roi_bottom);
  };

  PilotResult res;
  res.input = eval(held);
  auto report = [&](const char* tag) {
    return [&, tag](const EpochRecord& r) {
      if (progress && (r.epoch % 10 == 0 || r.epoch + 1 == tc.epochs))
        progress(std::string("pilot ") + tag + ": epoch " + std::to_string(r.epoch) + " loss " +
                 std::to_string(r.loss) + " val " + std::to_string(r.val_bmode));
    };
  };
  tc.loss = LossKind::adaptive_mixed;
  auto mixed = train(ds, tc, report("mixed"));
  res.mixed = eval(infer(mixed.model.net, held));
  res.mixed_history = std::move(mixed.history);
  tc.loss = LossKind::mse;
  auto mse = train(ds, tc, report("mse"));
  res.mse = eval(infer(mse.model.net, held));
  res.mse_history = std::move(mse.history);
  res.seconds = seconds_since(t0);
  return res;
}

// -------------------------------------------------------- main study ---

struct MainStudyResult {
  SuiteReport input, output;  // over the test versions, downsampled grid
  std::vector<CystEval> input_versions, output_versions;
  TrainHistory history;
  double lambda = 1;
  double seconds = 0;

  nlohmann::json to_json() const {
    return {{"input", input.to_json()}, {"output", output.to_json()}, {"lambda", lambda}, {"seconds", seconds}};
  }
};

/// Trains on `cfg.realizations` random-inclusion scenes and evaluates on
/// aberrated versions of the never-seen cyst scene.
inline MainStudyResult run_main_study(const FsaCube& cyst_cube, const RunConfig& cfg, Model* trained = nullptr,
                                      const Progress& progress = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto grid = cfg.image_grid();
  VersionOptions vo = cfg.versions;
  vo.beamform = cfg.beamform;

  std::vector<std::vector<RfImage>> images;
  for (std::size_t r = 0; r < cfg.realizations; ++r) {
    const auto cube = simulate_realization(cfg, r);
    std::vector<RfImage> vs;
    for (auto& v : make_aberrated_versions(cube, cfg.version_count, mix64(cfg.seed * 31 + r), grid, vo))
      vs.push_back(std::move(v.image));
    images.push_back(std::move(vs));
    if (progress) progress("main: realization " + std::to_string(r + 1) + "/" + std::to_string(cfg.realizations));
  }
  std::vector<const RfImage*> fit;
  for (const auto& r : images)
    for (std::size_t v = 0; v + 1 < r.size(); ++v) fit.push_back(&r[v]);
  MainStudyResult res;
  res.lambda = fit_lambda(fit);
  const auto ds = make_dataset(images, res.lambda);
  images.clear();

  auto tr = train(ds, cfg.train, [&](const EpochRecord& r) {
    if (progress && (r.epoch % 10 == 0 || r.epoch + 1 == cfg.train.epochs))
      progress("main: epoch " + std::to_string(r.epoch) + " loss " + std::to_string(r.loss) + " val " +
               std::to_string(r.val_bmode));
  });
  res.history = tr.history;

  const auto tests = make_aberrated_versions(cyst_cube, cfg.version_count, mix64(cfg.seed + 0x74657374), grid, vo);
  std::vector<Array2D<double>> env_in, env_out;
  ImageGrid dgrid;
  for (const auto& v : tests) {
    const auto in = to_net_domain(v.image, res.lambda);
    dgrid = in.grid;
    env_in.push_back(envelope_of(from_net_domain(in).data));
    env_out.push_back(envelope_of(from_net_domain(infer(tr.model.net, in)).data));
    res.input_versions.push_back(evaluate_cysts(env_in.back(), dgrid, cfg.roi_top, cfg.roi_bottom));
    res.output_versions.push_back(evaluate_cysts(env_out.back(), dgrid, cfg.roi_top, cfg.roi_bottom));
  }
  const std::vector<NamedRoi> rois{{"top", cfg.roi_top}, {"bottom", cfg.roi_bottom}};
  res.input = evaluate_suite(env_in, dgrid, rois);
  res.output = evaluate_suite(env_out, dgrid, rois);
  if (trained) *trained = std::move(tr.model);
  res.seconds = seconds_since(t0);
  return res;
}

}  // namespace abench
