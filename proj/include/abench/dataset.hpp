// SPDX-License-Identifier: Apache-2.0
#pragma once

// Aberrated version sets: one FSA cube, many random phase screens, each
// synthesized and beamformed.

#include <cstdint>
#include <vector>

#include "abench/aberration_profile.hpp"
#include "abench/acoustic_sim.hpp"
#include "abench/beamformer.hpp"
#include "abench/core/rng.hpp"
#include "abench/wavefront_synthesis.hpp"

namespace abench {

/// Per-version profile statistics are drawn uniformly from these ranges.
struct VersionRanges {
  double rms_min = ProfileSpec::kRmsMin, rms_max = ProfileSpec::kRmsMax;
  double fwhm_min = ProfileSpec::kFwhmMin, fwhm_max = ProfileSpec::kFwhmMax;

  static VersionRanges fixed(double rms, double fwhm) { return {rms, rms, fwhm, fwhm}; }
};

struct VersionOptions {
  VersionRanges ranges;
  bool decouple_receive = false;  // independent receive screen per version
  BeamformOptions beamform;
};

struct AberratedVersion {
  AberrationProfile transmit, receive;
  RfImage image;
};

inline ProfileSpec version_spec(const VersionRanges& r, std::uint64_t seed, std::uint64_t version,
                                std::uint64_t salt = 0) {
  auto rng = CounterRng::stream(seed, 0x76657273 /* "vers" */ ^ salt, version);
  ProfileSpec s;
  s.rms_target = rng.uniform(r.rms_min, r.rms_max);
  s.acf_fwhm_target = rng.uniform(r.fwhm_min, r.fwhm_max);
  s.seed = rng.next_u64();
  return s;
}

/// Image formed from `cube` with transmit screen `tx` and receive screen `rx`.
inline RfImage aberrated_image(const FsaCube& cube, const AberrationProfile& tx, const AberrationProfile& rx,
                               const ImageGrid& grid, const BeamformOptions& bf = {}) {
  return beamform(synthesize_planewave(cube, tx), rx, grid, bf).image;
}

inline std::vector<AberratedVersion> make_aberrated_versions(const FsaCube& cube, std::size_t count,
                                                             std::uint64_t seed, const ImageGrid& grid,
                                                             const VersionOptions& opt = {}) {
  const std::size_t ne = cube.n_elements();
  const double pitch = cube.xducer.pitch;
  std::vector<AberratedVersion> out;
  out.reserve(count);
  for (std::size_t v = 0; v < count; ++v) {
    AberratedVersion av;
    av.transmit = generate_profile(version_spec(opt.ranges, seed, v), ne, pitch);
    av.receive = opt.decouple_receive ? generate_profile(version_spec(opt.ranges, seed, v, 0x7278), ne, pitch)
                                      : av.transmit;
    av.image = aberrated_image(cube, av.transmit, av.receive, grid, opt.beamform);
    out.push_back(std::move(av));
  }
  return out;
}

}  // namespace abench
