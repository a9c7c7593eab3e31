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
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "phnet/hypercomplex.hpp"
#include "phnet/ops.hpp"
#include "phnet/rng.hpp"

namespace phnet {

/// One entry of a model's state: learnable parameters and BN running stats.
struct StateEntry {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};
using StateDict = std::vector<StateEntry>;

struct BatchNorm2d {
  Tensor gamma;
  Tensor beta;
  RunningStats stats;

  static BatchNorm2d create(std::int64_t channels, DType dtype);
  Tensor forward(const Tensor& x, Mode mode);
  void collect(const std::string& prefix, StateDict& out) const;
};

struct Linear {
  Tensor weight;  // [K, D, 1, 1]
  Tensor bias;    // [K, 1, 1, 1]

  static Linear create(std::int64_t in_features, std::int64_t out_features, Rng& rng, DType dtype);
  Tensor forward(const Tensor& x) const { return linear(x, weight, bias); }
  void collect(const std::string& prefix, StateDict& out) const;
};

void collect_phc(const PHCLayer& layer, const std::string& prefix, StateDict& out);

/// Residual block with PHC convolutions.
///
/// The residual function alternates PHC and BN with ReLU between them:
/// two 3x3 convolutions for the basic block, 1x1 / 3x3 / 1x1 for the
/// bottleneck. Output is ReLU(F(x) + shortcut(x)) where the shortcut is the
/// identity or a strided 1x1 PHC followed by BN.
struct ResidualBlock {
  struct Shortcut {
    PHCLayer conv;
    BatchNorm2d norm;
  };

  std::vector<PHCLayer> convs;
  std::vector<BatchNorm2d> norms;
  std::optional<Shortcut> shortcut;

  static ResidualBlock basic(int n, std::int64_t in_channels, std::int64_t width, int stride, Rng& rng,
                             DType dtype);
  static ResidualBlock bottleneck(int n, std::int64_t in_channels, std::int64_t width, int expansion,
                                  int stride, Rng& rng, DType dtype);

  std::int64_t in_channels() const { return convs.front().in_channels(); }
  std::int64_t out_channels() const { return convs.back().out_channels(); }
  void collect(const std::string& prefix, StateDict& out) const;
};

Tensor ph_residual_block(const Tensor& x, ResidualBlock& block, Mode mode);

// ---------------------------------------------------------------------------

enum class Depth { d18, d50, mini };

const char* depth_name(Depth depth);
Depth parse_depth(const std::string& text);

struct StemSpec {
  int kernel = 7;
  int stride = 2;
  bool max_pool = true;
};

/// Declarative PHResNet description.
struct ModelSpec {
  Depth depth = Depth::d18;
  int n = 1;
  int in_channels = 3;
  int num_classes = 2;
  std::vector<int> stage_widths;
  std::vector<int> blocks;  // residual blocks per stage
  int expansion = 1;        // bottleneck output = width * expansion
  StemSpec stem;
  DType dtype = DType::f32;

  /// Standard layouts: 18 -> [2,2,2,2] basic, 50 -> [3,4,6,3] bottleneck,
  /// mini -> [1,1] basic with widths [16,32]. Widths are rounded down to a
  /// multiple of n.
  static ModelSpec standard(Depth depth, int n, int in_channels, int num_classes = 2);

  bool bottleneck() const { return depth == Depth::d50; }
  void validate() const;

  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
};

/// Anything trained by the training loop: maps [N,C,H,W] to logits [N,K,1,1].
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  virtual StateDict state() const = 0;
  /// Spec with a "kind" discriminator, enough to rebuild the model.
  virtual nlohmann::json spec_json() const = 0;
  virtual int in_channels() const = 0;
  virtual DType dtype() const = 0;

  std::vector<StateEntry> parameters() const;
};

std::int64_t count_params(const PHCLayer& layer);
std::int64_t count_params(const Classifier& model);

/// PHResNet-18/50 or the mini variant. Stem: k x k strided PHC + BN + ReLU
/// (+ 3x3 max-pool stride 2); head: global average pool + real linear.
class PHResNet : public Classifier {
 public:
  PHResNet(const ModelSpec& spec, Rng& rng);

  Tensor forward(const Tensor& x, Mode mode) override;
  /// Features before pooling, [N, C_last, h, w].
  Tensor features(const Tensor& x, Mode mode);
  StateDict state() const override;
  nlohmann::json spec_json() const override;
  int in_channels() const override { return spec_.in_channels; }
  DType dtype() const override { return spec_.dtype; }

  const ModelSpec& spec() const { return spec_; }
  std::vector<std::vector<ResidualBlock>>& stages() { return stages_; }
  PHCLayer& stem() { return stem_conv_; }
  BatchNorm2d& stem_norm() { return stem_norm_; }
  Linear& head() { return fc_; }

 private:
  ModelSpec spec_;
  PHCLayer stem_conv_;
  BatchNorm2d stem_norm_;
  std::vector<std::vector<ResidualBlock>> stages_;
  Linear fc_;
};

std::unique_ptr<PHResNet> build_model(const ModelSpec& spec, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Attention-pooling classifier used as an in-repo attention-map producer.

/// Single learned query attending over the positions of a feature map.
struct AttentionPoolHead {
  Tensor key_weight;  // [D, C, 1, 1] projection of features to keys
  Tensor query;       // [1, D, 1, 1]
  Linear classifier;  // C -> K on the attention-weighted feature sum

  static AttentionPoolHead create(std::int64_t channels, std::int64_t key_dim, int num_classes, Rng& rng,
                                  DType dtype);
  void collect(const std::string& prefix, StateDict& out) const;
};

struct AttentionOutput {
  Tensor logits;   // [N, K, 1, 1]
  Tensor weights;  // [N, 1, h, w], softmax over positions
  Tensor map;      // [N, 1, out_h, out_w], upsampled and scaled to max 1
};

/// Keys = 1x1 projection of `features`; logits_p = <query, key_p> / sqrt(D);
/// weights = softmax over positions; class logits from the weighted feature
/// sum. The map is the weights upsampled bilinearly to (out_h, out_w) and
/// divided by its per-sample maximum. Pass out_h = 0 to skip the map.
AttentionOutput attention_pool_forward(const Tensor& features, const AttentionPoolHead& head,
                                       std::int64_t out_h = 0, std::int64_t out_w = 0);

struct AttentionPoolSpec {
  int in_channels = 1;
  int num_classes = 2;
  std::vector<int> trunk_widths{16, 32};
  int key_dim = 16;
  DType dtype = DType::f32;

  nlohmann::json to_json() const;
  static AttentionPoolSpec from_json(const nlohmann::json& j);
};

/// Small trunk of stride-2 3x3 conv + BN + ReLU stages followed by an
/// attention-pooling head.
class AttentionPoolNet : public Classifier {
 public:
  AttentionPoolNet(const AttentionPoolSpec& spec, Rng& rng);

  Tensor forward(const Tensor& x, Mode mode) override;
  AttentionOutput forward_with_map(const Tensor& x, Mode mode);
  StateDict state() const override;
  nlohmann::json spec_json() const override;
  int in_channels() const override { return spec_.in_channels; }
  DType dtype() const override { return spec_.dtype; }

  AttentionPoolHead& head() { return head_; }

 private:
  Tensor trunk(const Tensor& x, Mode mode);

  AttentionPoolSpec spec_;
  std::vector<PHCLayer> convs_;
  std::vector<BatchNorm2d> norms_;
  AttentionPoolHead head_;
};

/// Rebuilds a classifier from spec_json() output (weights freshly initialized).
std::unique_ptr<Classifier> build_classifier(const nlohmann::json& spec, std::uint64_t seed = 0);

/// Copies values into the model's state by name; every entry must match.
void load_state(Classifier& model, const StateDict& values);

/// Deep copy of the model state (used for best-epoch snapshots).
StateDict snapshot_state(const Classifier& model);

/// Bilinear resize of [N,C,H,W] with half-pixel centers (no grad).
Tensor resize_bilinear(const Tensor& x, std::int64_t out_h, std::int64_t out_w);

}  // namespace phnet
