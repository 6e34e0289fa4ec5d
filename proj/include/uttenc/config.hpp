// Copyright 2026 uttenc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef UTTENC_CONFIG_HPP_
#define UTTENC_CONFIG_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "uttenc/evalkit.hpp"
#include "uttenc/model.hpp"

namespace uttenc {

enum class Precision { kFloat32, kFloat64 };

std::string to_string(Precision p);

struct TrainConfig {
  Index batch_size = 32;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<double> lr_stages = {0.1, 0.01, 0.001};
  std::array<int, 2> crop_range = {300, 800};
  int epochs = 30;
  std::uint64_t seed = 0;
  int plateau_patience = 3;
  double plateau_tolerance = 0.01;  // relative epoch-loss improvement
  std::optional<double> target_train_acc;  // stop once reached

  std::vector<std::string> problems() const;
  void validate() const;
};

/// Everything a run needs. Serialised as a hierarchical JSON document; a
/// partial document overrides the defaults and unknown keys are rejected.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DetCostParams metrics;
  Precision precision = Precision::kFloat32;

  RunConfig();

  /// Every validation failure, not just the first.
  std::vector<std::string> problems() const;
  /// Throws ConfigError listing all problems.
  void validate() const;

  nlohmann::json to_json() const;
  /// Overlays `j` onto `base`. Throws ConfigError on unknown keys or
  /// mistyped values.
  static RunConfig from_json(const nlohmann::json& j, const RunConfig& base = RunConfig());
};

RunConfig load_run_config(const std::filesystem::path& path);

/// FNV-1a 64-bit hash as 16 lowercase hex digits.
std::string fnv1a_hex(const void* data, std::size_t size);
std::string fnv1a_hex(const std::string& text);

}  // namespace uttenc

#endif  // UTTENC_CONFIG_HPP_
