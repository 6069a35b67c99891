// SPDX-License-Identifier: Apache-2.0
#pragma once

// Typed save/load for pipeline artifacts. Each artifact is a tensor file
// plus a JSON sidecar carrying its metadata and provenance.

#include <filesystem>
#include <string>

#include "json.hpp"

#include "abench/aberration_profile.hpp"
#include "abench/acoustic_sim.hpp"
#include "abench/beamformer.hpp"
#include "abench/core/tensor_io.hpp"
#include "abench/wavefront_synthesis.hpp"

namespace abench {

inline nlohmann::json to_json(const ImageGrid& g) { return {{"x", g.x}, {"z", g.z}}; }

inline ImageGrid grid_from_json(const nlohmann::json& j) {
  ImageGrid g{j.at("x").get<std::vector<double>>(), j.at("z").get<std::vector<double>>()};
  g.validate();
  return g;
}

inline nlohmann::json to_json(const TransducerSpec& t) {
  return {{"n_elements", t.n_elements},         {"pitch", t.pitch},
          {"center_freq", t.center_freq},       {"sample_rate_hi", t.sample_rate_hi},
          {"sample_rate_lo", t.sample_rate_lo}, {"pulse_cycles", t.pulse_cycles},
          {"sound_speed", t.sound_speed_nominal}};
}

inline TransducerSpec transducer_from_json(const nlohmann::json& j) {
  TransducerSpec t;
  t.n_elements = j.at("n_elements").get<std::size_t>();
  t.pitch = j.at("pitch").get<double>();
  t.center_freq = j.at("center_freq").get<double>();
  t.sample_rate_hi = j.at("sample_rate_hi").get<double>();
  t.sample_rate_lo = j.at("sample_rate_lo").get<double>();
  t.pulse_cycles = j.at("pulse_cycles").get<double>();
  t.sound_speed_nominal = j.at("sound_speed").get<double>();
  t.validate();
  return t;
}

namespace detail {

inline nlohmann::json require_kind(const std::filesystem::path& p, const char* kind) {
  auto j = load_sidecar(p);
  if (j.value("kind", std::string{}) != kind)
    throw DataError(p.string() + ": expected a '" + kind + "' artifact (sidecar kind '" +
                    j.value("kind", std::string{"missing"}) + "')");
  return j;
}

inline void merge(nlohmann::json& into, const nlohmann::json& extra) {
  if (extra.is_object())
    for (const auto& [k, v] : extra.items()) into[k] = v;
}

}  // namespace detail

// --------------------------------------------------------------- profile ---

inline void save_profile(const std::filesystem::path& p, const AberrationProfile& prof,
                         const nlohmann::json& extra = {}) {
  Array1D<double> a({prof.delays.size()}, prof.delays);
  nlohmann::json j{{"kind", "profile"}, {"pitch", prof.pitch}, {"units", "s"}, {"hash", content_hash(a)}};
  detail::merge(j, extra);
  save_tensor(p, a, &j);
}

inline AberrationProfile load_profile(const std::filesystem::path& p) {
  const auto j = detail::require_kind(p, "profile");
  const auto a = load_tensor<double, 1>(p);
  AberrationProfile prof{a.storage(), j.at("pitch").get<double>()};
  prof.validate();
  return prof;
}

// ------------------------------------------------------------------ cube ---

inline void save_cube(const std::filesystem::path& p, const FsaCube& c, const nlohmann::json& extra = {}) {
  nlohmann::json j{{"kind", "fsa_cube"},
                   {"t0", c.t0},
                   {"sample_rate", c.sample_rate},
                   {"transducer", to_json(c.xducer)},
                   {"hash", content_hash(c.data)}};
  detail::merge(j, extra);
  save_tensor(p, c.data, &j);
}

inline FsaCube load_cube(const std::filesystem::path& p) {
  const auto j = detail::require_kind(p, "fsa_cube");
  FsaCube c{load_tensor<float, 3>(p), j.at("t0").get<double>(), j.at("sample_rate").get<double>(),
            transducer_from_json(j.at("transducer"))};
  if (c.n_elements() != c.xducer.n_elements || c.data.dim(1) != c.xducer.n_elements)
    throw ShapeError(p.string() + ": cube dims do not match its transducer");
  return c;
}

// -------------------------------------------------------------- channels ---

inline void save_channels(const std::filesystem::path& p, const ChannelRF& ch, const nlohmann::json& extra = {}) {
  nlohmann::json j{{"kind", "channels"}, {"t0", ch.t0}, {"sample_rate", ch.sample_rate}, {"hash", content_hash(ch.data)}};
  detail::merge(j, extra);
  save_tensor(p, ch.data, &j);
}

inline ChannelRF load_channels(const std::filesystem::path& p) {
  const auto j = detail::require_kind(p, "channels");
  return {load_tensor<float, 2>(p), j.at("t0").get<double>(), j.at("sample_rate").get<double>()};
}

// ---------------------------------------------------------------- images ---

/// `kind` is one of "rf_image", "envelope", "bmode".
template <typename T>
void save_image(const std::filesystem::path& p, const Array2D<T>& data, const ImageGrid& grid, const char* kind,
                const nlohmann::json& extra = {}) {
  if (data.dim(0) != grid.rows() || data.dim(1) != grid.cols()) throw ShapeError("save_image: grid mismatch");
  nlohmann::json j{{"kind", kind}, {"grid", to_json(grid)}, {"hash", content_hash(data)}};
  detail::merge(j, extra);
  save_tensor(p, data, &j);
}

struct LoadedImage {
  Array2D<double> data;
  ImageGrid grid;
  std::string kind;
  nlohmann::json sidecar;
};

inline LoadedImage load_image(const std::filesystem::path& p) {
  auto j = load_sidecar(p);
  const auto kind = j.value("kind", std::string{});
  if (kind != "rf_image" && kind != "envelope" && kind != "bmode")
    throw DataError(p.string() + ": not an image artifact");
  LoadedImage im{load_tensor<double, 2>(p), grid_from_json(j.at("grid")), kind, j};
  if (im.data.dim(0) != im.grid.rows() || im.data.dim(1) != im.grid.cols())
    throw ShapeError(p.string() + ": image dims do not match its grid");
  return im;
}

inline RfImage load_rf_image(const std::filesystem::path& p) {
  auto im = load_image(p);
  if (im.kind != "rf_image") throw DataError(p.string() + ": expected an RF image, found '" + im.kind + "'");
  RfImage rf{Array2D<float>(im.data.dims()), im.grid};
  std::copy(im.data.flat().begin(), im.data.flat().end(), rf.data.flat().begin());
  return rf;
}

}  // namespace abench
