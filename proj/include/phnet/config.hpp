// Copyright (c) 2026 The phnet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "phnet/data.hpp"
#include "phnet/models.hpp"
#include "phnet/train.hpp"

namespace phnet {

nlohmann::json synthetic_to_json(const SyntheticConfig& c);
/// Keys absent from `j` keep their defaults.
SyntheticConfig synthetic_from_json(const nlohmann::json& j);

/// Everything one command needs. A single root seed drives every random
/// stream (corpus, initialization, shuffling, augmentation) through named
/// sub-streams.
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output = "run";
  std::optional<std::filesystem::path> manifest;  // external corpus ...
  std::optional<SyntheticConfig> synthetic;       // ... or a generated one
  MapPolicy map_policy = MapPolicy::from_manifest;
  std::filesystem::path producer;  // attention_pool checkpoint
  std::int64_t target_size = 0;    // 0 keeps native image size
  ModelSpec model = ModelSpec::standard(Depth::mini, 2, 2);
  TrainConfig train;

  /// Exactly one data source; producer present iff the policy needs it;
  /// referenced files exist; model and training settings valid.
  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
};

struct RunData {
  Dataset train;
  Dataset val;
  Dataset test;
  int image_channels = 1;
};

/// Builds preprocessed train/val/test datasets for the configured source and
/// map policy.
RunData load_run_data(const RunConfig& config);
/// Only the requested split.
Dataset load_split(const RunConfig& config, Split split);

}  // namespace phnet
