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

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "phnet/rng.hpp"
#include "phnet/tensor.hpp"

namespace phnet {

/// An image with its attention map, handled as one multi-channel input.
/// Tensors are single images: image [1,C,H,W] with C in {1,3}, map [1,1,H,W].
struct AugmentedSample {
  Tensor image;
  Tensor attn_map;
  int label = 0;  // 0 negative/benign, 1 positive/malignant
  std::string id;
  std::string patient_id;

  void validate() const;
};

/// Image channels first, attention map last: [1, C+1, H, W].
Tensor stack_input(const AugmentedSample& sample);
/// Inverse of stack_input: (image [1,C-1,H,W], map [1,1,H,W]).
std::pair<Tensor, Tensor> unstack_input(const Tensor& stacked);

/// Per-channel z-score of a single image; std is floored at 1e-8.
Tensor standardize(const Tensor& image);
/// Bilinear resize to target x target followed by standardize().
Tensor preprocess(const Tensor& image, std::int64_t target = 384);
/// Per-image min-max rescale to [0,1]; a constant map becomes all zeros.
Tensor minmax_rescale(const Tensor& map);

// ---------------------------------------------------------------------------
// Geometric augmentation

/// Flips about the vertical / horizontal axis, then a rotation about the
/// image center. Positive angles rotate counter-clockwise as displayed
/// (x to the right, y down).
struct GeometricTransform {
  bool hflip = false;
  bool vflip = false;
  double angle_deg = 0.0;

  /// Each flip with probability 0.5, angle uniform in (-max_deg, +max_deg).
  static GeometricTransform draw(Rng& rng, double max_deg = 10.0);
};

/// Applies `t` to every channel of [N,C,H,W] with bilinear sampling; samples
/// falling outside the source are 0.
Tensor apply_transform(const Tensor& x, const GeometricTransform& t);
/// Where pixel coordinate (x, y) of an H x W image lands under `t`.
std::pair<double, double> transform_point(const GeometricTransform& t, double x, double y, std::int64_t height,
                                          std::int64_t width);
/// Random flips and rotation drawn from `rng`, applied jointly to all channels.
Tensor augment(const Tensor& x, Rng& rng);

// ---------------------------------------------------------------------------
// Manifests

enum class Split { train, val, test };
const char* split_name(Split split);
Split parse_split(const std::string& text);

struct ManifestRecord {
  std::string id;
  std::string image;  // path, relative to the manifest directory unless absolute
  std::string map;    // may be empty
  int label = 0;
  std::string patient;  // may be empty
  Split split = Split::train;
};

/// CSV with header `id,image,map,label,patient,split`.
struct Manifest {
  std::vector<ManifestRecord> records;
  std::filesystem::path base_dir;

  /// Unique ids; no patient appears in two splits.
  void validate() const;
  std::vector<const ManifestRecord*> in_split(Split split) const;
  std::filesystem::path resolve(const std::string& relative) const;
};

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

/// Assigns splits so each class keeps its global proportion in every split
/// (largest-remainder allocation). With `by_patient`, all records of a
/// patient move together. fractions are (train, val, test) and sum to 1.
std::vector<ManifestRecord> split_stratified(std::vector<ManifestRecord> records,
                                             std::array<double, 3> fractions, bool by_patient,
                                             std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic corpus

struct SyntheticConfig {
  std::int64_t image_size = 64;
  std::int64_t count = 512;
  int channels = 1;
  double radius_min = 3.0;
  double radius_max = 5.0;
  double contrast = 1.5;      // mean lesion intensity over the texture
  double noise_scale = 1.0;   // std of the background texture
  double texture_sigma = 1.0; // spatial correlation of the texture (pixels)
  double fidelity = 0.9;      // 1 = map is a clean blob on the lesion, 0 = noise
  double positive_fraction = 0.5;
  std::array<double, 3> split_fractions{0.6, 0.2, 0.2};
  int images_per_patient = 0;  // 0: no patient ids
  std::uint64_t seed = 7;

  void validate() const;
};

struct LesionInfo {
  bool present = false;
  std::int64_t cx = 0;  // lesion center (column) or negative-map blob center
  std::int64_t cy = 0;
  double radius = 0.0;
};

struct SyntheticCorpus {
  std::vector<AugmentedSample> samples;
  std::vector<LesionInfo> lesions;
  Manifest manifest;  // image/map paths are images/<id>.pht, maps/<id>.pht
};

/// Positives carry a bright textured disc on a smooth noise texture;
/// negatives are texture only. The map is a Gaussian blob at the lesion (a
/// random location for negatives) blended with uniform noise by `fidelity`
/// and min-max rescaled. Fully determined by the config.
SyntheticCorpus generate_synthetic(const SyntheticConfig& config);

/// Writes images/, maps/ (PHT1) and manifest.csv under `dir`.
void write_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir);

}  // namespace phnet
