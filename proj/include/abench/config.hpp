// SPDX-License-Identifier: Apache-2.0
#pragma once

// Run configuration as `key = value` lines. Values are SI (m, s, Hz, m/s,
// scatterers per m^2); `#` starts a comment; unknown keys are rejected.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "abench/acoustic_sim.hpp"
#include "abench/beamformer.hpp"
#include "abench/core/errors.hpp"
#include "abench/dataset.hpp"
#include "abench/metrics.hpp"
#include "abench/trainer.hpp"

namespace abench {

struct GridConfig {
  std::size_t cols = 384;
  double z_min = 10e-3, z_max = 50e-3;
};

struct RunConfig {
  TransducerSpec transducer;
  SimOptions sim;
  PhantomRegion phantom;
  double density = kDefaultDensityPerMm2 * 1e6;  // per m^2
  GridConfig grid;
  BeamformOptions beamform;
  VersionOptions versions;
  std::size_t version_count = 16;
  std::size_t realizations = 8;
  std::size_t inclusions = 3;
  RoiSpec roi_top = cyst_roi_top();
  RoiSpec roi_bottom = cyst_roi_bottom();
  TrainConfig train;
  FinetuneConfig finetune;
  DepthPartition partition;
  std::uint64_t seed = 1;

  ImageGrid image_grid() const {
    return default_grid(transducer.n_elements, transducer.pitch, transducer.sample_rate_lo, beamform.sound_speed,
                        grid.cols, grid.z_min, grid.z_max);
  }

  /// Parses `text`, overriding defaults. Throws RangeError naming the line.
  static RunConfig parse(const std::string& text) {
    RunConfig c;
    c.apply(text);
    return c;
  }

  static RunConfig load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read config " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse(ss.str());
  }

  void apply(const std::string& text) {
    auto table = setters();
    std::istringstream is(text);
    std::string line;
    std::size_t no = 0;
    while (std::getline(is, line)) {
      ++no;
      if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
      const auto eq = line.find('=');
      const std::string key = trim(line.substr(0, eq));
      if (key.empty() && eq == std::string::npos) continue;
      if (eq == std::string::npos) throw RangeError("config line " + std::to_string(no) + ": expected key = value");
      const std::string value = trim(line.substr(eq + 1));
      auto it = table.find(key);
      if (it == table.end()) throw RangeError("config line " + std::to_string(no) + ": unknown key '" + key + "'");
      try {
        it->second(value);
      } catch (const RangeError& e) {
        throw RangeError("config line " + std::to_string(no) + " (" + key + "): " + e.what());
      }
    }
    validate();
  }

  void validate() const {
    transducer.validate();
    beamform_check();
    roi_top.validate();
    roi_bottom.validate();
    train.validate();
    if (version_count < 2) throw RangeError("synth.versions must be >= 2");
    if (density < 0) throw RangeError("phantom.density must be >= 0");
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    for (const auto& [k, get] : getters()) j[k] = get();
    return j;
  }

  static std::vector<std::string> keys() {
    std::vector<std::string> k;
    RunConfig c;
    for (const auto& [name, _] : c.setters()) k.push_back(name);
    return k;
  }

 private:
  void beamform_check() const {
    if (!(beamform.f_number > 0)) throw RangeError("beamform.f_number must be positive");
    if (!(beamform.sound_speed > 0)) throw RangeError("beamform.sound_speed must be positive");
    if (!(grid.z_max > grid.z_min && grid.z_min > 0)) throw RangeError("grid depth range must satisfy 0 < z_min < z_max");
    if (grid.cols < 2) throw RangeError("grid.cols must be >= 2");
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  }

  static double to_double(const std::string& v) {
    double out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) throw RangeError("not a number: '" + v + "'");
    return out;
  }

  static std::uint64_t to_uint(const std::string& v) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) throw RangeError("not a non-negative integer: '" + v + "'");
    return out;
  }

  static bool to_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw RangeError("not a boolean: '" + v + "'");
  }

  template <typename E>
  static E to_enum(const std::string& v, std::initializer_list<std::pair<const char*, E>> names) {
    for (const auto& [n, e] : names)
      if (v == n) return e;
    throw RangeError("unrecognized value '" + v + "'");
  }

  using Setter = std::function<void(const std::string&)>;
  using Getter = std::function<nlohmann::json()>;

  template <typename F>
  void visit(F&& f) {
    auto num = [&](const std::string& k, double& d) { f(k, Setter([&d](const std::string& v) { d = to_double(v); }), Getter([&d] { return nlohmann::json(d); })); };
    auto cnt = [&](const std::string& k, std::size_t& n) { f(k, Setter([&n](const std::string& v) { n = static_cast<std::size_t>(to_uint(v)); }), Getter([&n] { return nlohmann::json(n); })); };
    auto u64 = [&](const std::string& k, std::uint64_t& n) { f(k, Setter([&n](const std::string& v) { n = to_uint(v); }), Getter([&n] { return nlohmann::json(n); })); };
    auto flag = [&](const std::string& k, bool& b) { f(k, Setter([&b](const std::string& v) { b = to_bool(v); }), Getter([&b] { return nlohmann::json(b); })); };

    cnt("transducer.n_elements", transducer.n_elements);
    num("transducer.pitch", transducer.pitch);
    num("transducer.center_freq", transducer.center_freq);
    num("transducer.sample_rate_hi", transducer.sample_rate_hi);
    num("transducer.sample_rate_lo", transducer.sample_rate_lo);
    num("transducer.pulse_cycles", transducer.pulse_cycles);
    num("transducer.sound_speed", transducer.sound_speed_nominal);

    num("sim.record_duration", sim.record_duration);
    num("sim.spreading_floor", sim.spreading_floor);
    num("sim.element_width", sim.element_width);
    f("sim.directivity",
      Setter([this](const std::string& v) {
        sim.directivity = to_enum<Directivity>(v, {{"none", Directivity::none},
                                                   {"cosine", Directivity::cosine},
                                                   {"element_width", Directivity::element_width}});
      }),
      Getter([this] {
        return nlohmann::json(sim.directivity == Directivity::none     ? "none"
                              : sim.directivity == Directivity::cosine ? "cosine"
                                                                       : "element_width");
      }));

    num("phantom.x_min", phantom.x_min);
    num("phantom.x_max", phantom.x_max);
    num("phantom.z_min", phantom.z_min);
    num("phantom.z_max", phantom.z_max);
    num("phantom.sound_speed", phantom.sound_speed);
    num("phantom.density", density);
    cnt("phantom.inclusions", inclusions);

    cnt("grid.cols", grid.cols);
    num("grid.z_min", grid.z_min);
    num("grid.z_max", grid.z_max);

    num("beamform.f_number", beamform.f_number);
    num("beamform.sound_speed", beamform.sound_speed);
    f("beamform.interp",
      Setter([this](const std::string& v) {
        beamform.interp = to_enum<Interp>(v, {{"linear", Interp::linear}, {"kaiser_sinc", Interp::kaiser_sinc}});
      }),
      Getter([this] { return nlohmann::json(beamform.interp == Interp::linear ? "linear" : "kaiser_sinc"); }));
    f("beamform.apodization",
      Setter([this](const std::string& v) {
        beamform.apodization =
            to_enum<Apodization>(v, {{"rectangular", Apodization::rectangular}, {"hann", Apodization::hann}});
      }),
      Getter([this] {
        return nlohmann::json(beamform.apodization == Apodization::rectangular ? "rectangular" : "hann");
      }));

    num("profile.rms_min", versions.ranges.rms_min);
    num("profile.rms_max", versions.ranges.rms_max);
    num("profile.fwhm_min", versions.ranges.fwhm_min);
    num("profile.fwhm_max", versions.ranges.fwhm_max);
    flag("synth.decouple_receive", versions.decouple_receive);
    cnt("synth.versions", version_count);
    cnt("synth.realizations", realizations);

    for (auto* roi : {&roi_top, &roi_bottom}) {
      const std::string p = roi == &roi_top ? "roi.top." : "roi.bottom.";
      auto key = [&](const char* s) { return p + s; };
      num(key("cx"), roi->target.cx);
      num(key("cz"), roi->target.cz);
      num(key("r"), roi->target.r);
      num(key("annulus_inner"), roi->annulus_inner);
      num(key("annulus_outer"), roi->annulus_outer);
      num(key("snr_x0"), roi->snr_background.x0);
      num(key("snr_x1"), roi->snr_background.x1);
      num(key("snr_z0"), roi->snr_background.z0);
      num(key("snr_z1"), roi->snr_background.z1);
    }

    cnt("train.epochs", train.epochs);
    cnt("train.batch_size", train.batch_size);
    num("train.lr", train.lr_initial);
    f("train.lr_halving",
      Setter([this](const std::string& v) {
        train.lr_halving_epochs.clear();
        std::stringstream ss(v);
        std::string item;
        while (std::getline(ss, item, ','))
          if (!trim(item).empty()) train.lr_halving_epochs.push_back(static_cast<std::size_t>(to_uint(trim(item))));
      }),
      Getter([this] { return nlohmann::json(train.lr_halving_epochs); }));
    u64("train.seed", train.seed);
    cnt("train.levels", train.net.levels);
    cnt("train.base_width", train.net.base_width);
    cnt("train.patch_rows", train.patch_rows);
    cnt("train.validation_patches", train.validation_patches);
    flag("train.hold_out_last", train.hold_out_last);
    f("train.pairing",
      Setter([this](const std::string& v) {
        train.pairing = to_enum<PairingMode>(
            v, {{"per_realization", PairingMode::per_realization}, {"per_version", PairingMode::per_version}});
      }),
      Getter([this] {
        return nlohmann::json(train.pairing == PairingMode::per_realization ? "per_realization" : "per_version");
      }));
    f("train.loss",
      Setter([this](const std::string& v) {
        train.loss = to_enum<LossKind>(
            v, {{"adaptive_mixed", LossKind::adaptive_mixed}, {"mse", LossKind::mse}, {"bmode", LossKind::bmode}});
      }),
      Getter([this] {
        return nlohmann::json(train.loss == LossKind::adaptive_mixed ? "adaptive_mixed"
                              : train.loss == LossKind::mse          ? "mse"
                                                                     : "bmode");
      }));

    num("finetune.lr", finetune.lr);
    num("finetune.fraction", finetune.epoch_fraction);
    flag("finetune.freeze_alpha", finetune.freeze_alpha);
    cnt("partition.sections", partition.n_sections);
    num("partition.overlap", partition.overlap_fraction);
    u64("seed", seed);
  }

  std::map<std::string, Setter> setters() {
    std::map<std::string, Setter> m;
    visit([&](const std::string& k, Setter s, Getter) { m.emplace(k, std::move(s)); });
    return m;
  }

  std::map<std::string, Getter> getters() const {
    std::map<std::string, Getter> m;
    const_cast<RunConfig*>(this)->visit([&](const std::string& k, Setter, Getter g) { m.emplace(k, std::move(g)); });
    return m;
  }
};

}  // namespace abench
