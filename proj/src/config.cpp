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

#include "phnet/config.hpp"

#include <fstream>

#include "phnet/checkpoint.hpp"
#include "phnet/error.hpp"

namespace phnet {

nlohmann::json synthetic_to_json(const SyntheticConfig& c) {
  return {{"image_size", c.image_size},
          {"count", c.count},
          {"channels", c.channels},
          {"radius_min", c.radius_min},
          {"radius_max", c.radius_max},
          {"contrast", c.contrast},
          {"noise_scale", c.noise_scale},
          {"texture_sigma", c.texture_sigma},
          {"fidelity", c.fidelity},
          {"positive_fraction", c.positive_fraction},
          {"split_fractions", c.split_fractions},
          {"images_per_patient", c.images_per_patient},
          {"seed", c.seed}};
}

SyntheticConfig synthetic_from_json(const nlohmann::json& j) {
  SyntheticConfig c;
  try {
    c.image_size = j.value("image_size", c.image_size);
    c.count = j.value("count", c.count);
    c.channels = j.value("channels", c.channels);
    c.radius_min = j.value("radius_min", c.radius_min);
    c.radius_max = j.value("radius_max", c.radius_max);
    c.contrast = j.value("contrast", c.contrast);
    c.noise_scale = j.value("noise_scale", c.noise_scale);
    c.texture_sigma = j.value("texture_sigma", c.texture_sigma);
    c.fidelity = j.value("fidelity", c.fidelity);
    c.positive_fraction = j.value("positive_fraction", c.positive_fraction);
    c.split_fractions = j.value("split_fractions", c.split_fractions);
    c.images_per_patient = j.value("images_per_patient", c.images_per_patient);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synthetic config: ") + e.what());
  }
  return c;
}

void RunConfig::validate() const {
  if (manifest.has_value() == synthetic.has_value()) {
    throw ConfigError("configure exactly one data source: a manifest or a synthetic corpus");
  }
  if (manifest && !std::filesystem::is_regular_file(*manifest)) {
    throw ConfigError("manifest " + manifest->string() + " does not exist");
  }
  if (synthetic) synthetic->validate();
  if (map_policy == MapPolicy::attention_pool) {
    if (producer.empty()) throw ConfigError("map policy attention_pool needs a producer checkpoint");
    if (!std::filesystem::is_regular_file(producer)) throw ConfigError("producer " + producer.string() + " does not exist");
  } else if (!producer.empty()) {
    throw ConfigError("a producer is only used with map policy attention_pool");
  }
  if (target_size < 0) throw ConfigError("target_size must be >= 0");
  model.validate();
  train.validate();
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j{{"seed", seed},
                   {"output", output.string()},
                   {"map_policy", map_policy_name(map_policy)},
                   {"target_size", target_size},
                   {"model", model.to_json()},
                   {"train", train.to_json()}};
  if (manifest) j["manifest"] = manifest->string();
  if (synthetic) j["synthetic"] = synthetic_to_json(*synthetic);
  if (!producer.empty()) j["producer"] = producer.string();
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.output = j.value("output", c.output.string());
    if (j.contains("manifest")) c.manifest = j.at("manifest").get<std::string>();
    if (j.contains("synthetic")) c.synthetic = synthetic_from_json(j.at("synthetic"));
    c.map_policy = parse_map_policy(j.value("map_policy", std::string(map_policy_name(c.map_policy))));
    c.producer = j.value("producer", std::string());
    c.target_size = j.value("target_size", c.target_size);
    if (j.contains("model")) c.model = ModelSpec::from_json(j.at("model"));
    if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  c.train.seed = c.seed;
  if (c.synthetic) c.synthetic->seed = c.seed;
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  try {
    return from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

namespace {

std::unique_ptr<AttentionPoolNet> load_producer(const RunConfig& config) {
  if (config.map_policy != MapPolicy::attention_pool) return nullptr;
  auto model = restore_model(load_checkpoint(config.producer));
  auto* producer = dynamic_cast<AttentionPoolNet*>(model.get());
  if (producer == nullptr) throw ConfigError("checkpoint " + config.producer.string() + " is not an attention-pool model");
  model.release();
  return std::unique_ptr<AttentionPoolNet>(producer);
}

Dataset synthetic_split(const RunConfig& config, const SyntheticCorpus& corpus, Split split, AttentionPoolNet* producer) {
  std::vector<AugmentedSample> samples;
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    if (corpus.manifest.records[i].split != split) continue;
    const AugmentedSample& raw = corpus.samples[i];
    const Tensor* map = config.map_policy == MapPolicy::from_manifest ? &raw.attn_map : nullptr;
    AugmentedSample s = prepare_sample(raw.image, map, raw.label, raw.id, raw.patient_id, config.target_size);
    if (config.map_policy == MapPolicy::attention_pool) s.attn_map = produce_map(*producer, s.image);
    samples.push_back(std::move(s));
  }
  return make_dataset(samples);
}

}  // namespace

RunData load_run_data(const RunConfig& config) {
  RunData d;
  auto producer = load_producer(config);
  if (config.synthetic) {
    const SyntheticCorpus corpus = generate_synthetic(*config.synthetic);
    d.train = synthetic_split(config, corpus, Split::train, producer.get());
    d.val = synthetic_split(config, corpus, Split::val, producer.get());
    d.test = synthetic_split(config, corpus, Split::test, producer.get());
    d.image_channels = config.synthetic->channels;
  } else {
    const Manifest m = read_manifest(*config.manifest);
    d.train = make_dataset(load_samples(m, Split::train, config.map_policy, config.target_size, producer.get()));
    d.val = make_dataset(load_samples(m, Split::val, config.map_policy, config.target_size, producer.get()));
    d.test = make_dataset(load_samples(m, Split::test, config.map_policy, config.target_size, producer.get()));
    const Dataset& any = d.train.size() ? d.train : d.val.size() ? d.val : d.test;
    if (any.size()) d.image_channels = static_cast<int>(any.inputs.front().shape().c) - 1;
  }
  return d;
}

Dataset load_split(const RunConfig& config, Split split) {
  auto producer = load_producer(config);
  if (config.synthetic) return synthetic_split(config, generate_synthetic(*config.synthetic), split, producer.get());
  const Manifest m = read_manifest(*config.manifest);
  return make_dataset(load_samples(m, split, config.map_policy, config.target_size, producer.get()));
}

}  // namespace phnet
