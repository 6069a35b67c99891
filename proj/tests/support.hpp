// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "abench/acoustic_sim.hpp"
#include "abench/core/rng.hpp"

namespace abench::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = "abench_" + tag;
    if (info) name += std::string("_") + info->test_suite_name() + "_" + info->name();
    path_ = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& f) const { return path_ / f; }

 private:
  std::filesystem::path path_;
};

/// 32-element probe with a short record, for fast simulations.
inline TransducerSpec small_probe() {
  TransducerSpec t;
  t.n_elements = 32;
  return t;
}

inline SimOptions short_record(double seconds = 45e-6) {
  SimOptions o;
  o.record_duration = seconds;
  return o;
}

/// Generator state for hand-rolled property tests.
inline CounterRng gen(std::uint64_t trial, std::uint64_t purpose = 0x74657374) {
  return CounterRng::stream(trial, purpose);
}

}  // namespace abench::testing
