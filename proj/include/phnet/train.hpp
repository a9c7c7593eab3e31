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
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "phnet/data.hpp"
#include "phnet/metrics.hpp"
#include "phnet/models.hpp"
#include "phnet/optim.hpp"

namespace phnet {

enum class Monitor { auc, accuracy };
const char* monitor_name(Monitor m);
Monitor parse_monitor(const std::string& text);

/// Where the last input channel comes from.
enum class MapPolicy { from_manifest, attention_pool, zero_map };
const char* map_policy_name(MapPolicy p);
MapPolicy parse_map_policy(const std::string& text);

struct TrainConfig {
  double lr = 1e-5;
  double weight_decay = 5e-4;
  int max_epochs = 100;
  int patience = 20;
  int batch_size = 8;
  std::uint64_t seed = 0;
  Monitor monitor = Monitor::auc;
  bool augment = true;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Stops after `patience` consecutive epochs without a strict improvement of
/// the monitored value, or after `max_epochs`. Epochs are 1-based.
class EarlyStopping {
 public:
  EarlyStopping(int patience, int max_epochs);

  /// Records the next epoch's value; returns true when it is a new best.
  bool update(double value);
  bool should_stop() const;

  int epochs() const { return epochs_; }
  int best_epoch() const { return best_epoch_; }
  double best_value() const { return best_; }
  int stale() const { return stale_; }

 private:
  int patience_;
  int max_epochs_;
  int epochs_ = 0;
  int best_epoch_ = 0;
  int stale_ = 0;
  double best_ = -std::numeric_limits<double>::infinity();
};

/// Preprocessed, stacked network inputs held in memory.
struct Dataset {
  std::vector<Tensor> inputs;  // each [1, C, H, W], map channel last when present
  std::vector<int> labels;
  std::vector<std::string> ids;

  std::size_t size() const { return inputs.size(); }
};

/// Stacks already-preprocessed samples (image standardized, map in [0,1]).
Dataset make_dataset(const std::vector<AugmentedSample>& samples, bool with_map = true);

/// Image standardization and map rescaling for one raw sample. `target` 0
/// keeps the native size; otherwise both are resized to target x target.
AugmentedSample prepare_sample(const Tensor& raw_image, const Tensor* raw_map, int label, std::string id,
                               std::string patient, std::int64_t target);

/// Reads the records of `split`. from_manifest requires every map path;
/// zero_map ignores them; attention_pool fills maps from `producer`.
std::vector<AugmentedSample> load_samples(const Manifest& manifest, Split split, MapPolicy policy,
                                          std::int64_t target, AttentionPoolNet* producer = nullptr);

/// Attention maps from a trained producer for preprocessed images [1,C,H,W].
Tensor produce_map(AttentionPoolNet& producer, const Tensor& image);

/// Concatenates [1,C,H,W] tensors into [N,C,H,W].
Tensor stack_batch(const std::vector<Tensor>& items);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_auc = 0.0;
  double val_accuracy = 0.0;
  double elapsed_s = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_value = 0.0;
  bool stopped_early = false;
  StateDict best_state;  // deep copies taken at the best epoch
};

struct TrainHooks {
  /// Called after each epoch, e.g. to append to a log file.
  std::function<void(const EpochLog&)> on_epoch;
  /// Replaces the measured validation metrics (used to script monitors in tests).
  std::function<std::pair<double, double>(int epoch)> override_validation;
};

/// Adam on mean cross-entropy with seeded shuffling and augmentation. On
/// return the model holds the best epoch's state.
TrainResult train(Classifier& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& config,
                  const TrainHooks& hooks = {});

/// Positive-class softmax probabilities in dataset order (eval mode).
std::vector<double> predict(Classifier& model, const Dataset& data, int batch_size = 32);
MetricsReport evaluate(Classifier& model, const Dataset& data, int batch_size = 32);

void write_log_header(const std::filesystem::path& path);
void append_log(const std::filesystem::path& path, const EpochLog& row);
std::vector<EpochLog> read_log(const std::filesystem::path& path);

}  // namespace phnet
