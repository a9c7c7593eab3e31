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

#include "phnet/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "phnet/error.hpp"
#include "phnet/autograd.hpp"
#include "phnet/image_io.hpp"
#include "phnet/ops.hpp"

namespace phnet {

const char* monitor_name(Monitor m) { return m == Monitor::auc ? "auc" : "accuracy"; }

Monitor parse_monitor(const std::string& text) {
  if (text == "auc") return Monitor::auc;
  if (text == "accuracy") return Monitor::accuracy;
  throw ConfigError("monitor must be 'auc' or 'accuracy', got '" + text + "'");
}

const char* map_policy_name(MapPolicy p) {
  switch (p) {
    case MapPolicy::from_manifest:
      return "from_manifest";
    case MapPolicy::attention_pool:
      return "attention_pool";
    case MapPolicy::zero_map:
      return "zero_map";
  }
  return "?";
}

MapPolicy parse_map_policy(const std::string& text) {
  if (text == "from_manifest") return MapPolicy::from_manifest;
  if (text == "attention_pool") return MapPolicy::attention_pool;
  if (text == "zero_map") return MapPolicy::zero_map;
  throw ConfigError("map policy must be from_manifest, attention_pool or zero_map, got '" + text + "'");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1 || patience > max_epochs) throw ConfigError("patience must be in [1, max_epochs]");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lr", lr},           {"weight_decay", weight_decay},     {"max_epochs", max_epochs},
          {"patience", patience}, {"batch_size", batch_size},       {"seed", seed},
          {"monitor", monitor_name(monitor)}, {"augment", augment}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.monitor = parse_monitor(j.value("monitor", std::string(monitor_name(c.monitor))));
  c.augment = j.value("augment", c.augment);
  return c;
}

EarlyStopping::EarlyStopping(int patience, int max_epochs) : patience_(patience), max_epochs_(max_epochs) {
  if (patience < 1 || max_epochs < 1) throw ConfigError("early stopping needs patience and max_epochs >= 1");
}

bool EarlyStopping::update(double value) {
  ++epochs_;
  if (value > best_) {
    best_ = value;
    best_epoch_ = epochs_;
    stale_ = 0;
    return true;
  }
  ++stale_;
  return false;
}

bool EarlyStopping::should_stop() const { return epochs_ >= max_epochs_ || stale_ >= patience_; }

// ---------------------------------------------------------------------------
// Data

Dataset make_dataset(const std::vector<AugmentedSample>& samples, bool with_map) {
  Dataset d;
  for (const auto& s : samples) {
    d.inputs.push_back(with_map ? stack_input(s) : s.image);
    d.labels.push_back(s.label);
    d.ids.push_back(s.id);
  }
  return d;
}

AugmentedSample prepare_sample(const Tensor& raw_image, const Tensor* raw_map, int label, std::string id,
                               std::string patient, std::int64_t target) {
  AugmentedSample s;
  const std::int64_t h = target > 0 ? target : raw_image.shape().h;
  const std::int64_t w = target > 0 ? target : raw_image.shape().w;
  s.image = target > 0 ? preprocess(raw_image, target) : standardize(raw_image);
  if (raw_map != nullptr) {
    if (raw_map->shape().c != 1) throw DimensionError("attention map must have one channel, got " + raw_map->shape().str());
    const Tensor resized =
        (raw_map->shape().h == h && raw_map->shape().w == w) ? *raw_map : resize_bilinear(*raw_map, h, w);
    s.attn_map = minmax_rescale(resized.to(s.image.dtype()));
  } else {
    s.attn_map = Tensor::zeros({1, 1, h, w}, s.image.dtype());
  }
  s.label = label;
  s.id = std::move(id);
  s.patient_id = std::move(patient);
  s.validate();
  return s;
}

Tensor produce_map(AttentionPoolNet& producer, const Tensor& image) {
  NoGradGuard no_grad;
  const Tensor x = image.dtype() == producer.dtype() ? image : image.to(producer.dtype());
  AttentionOutput out = producer.forward_with_map(x, Mode::eval);
  // The producer already scales to max 1; min-max makes the range exactly [0,1].
  return minmax_rescale(out.map).to(image.dtype());
}

std::vector<AugmentedSample> load_samples(const Manifest& manifest, Split split, MapPolicy policy,
                                          std::int64_t target, AttentionPoolNet* producer) {
  if (policy == MapPolicy::attention_pool && producer == nullptr) {
    throw ConfigError("map policy attention_pool needs a trained producer");
  }
  std::vector<AugmentedSample> out;
  std::vector<std::string> problems;
  for (const ManifestRecord* r : manifest.in_split(split)) {
    try {
      const Tensor image = load_image(manifest.resolve(r->image));
      if (policy == MapPolicy::from_manifest) {
        if (r->map.empty()) throw InputError("record has no map path");
        const Tensor map = load_image(manifest.resolve(r->map));
        out.push_back(prepare_sample(image, &map, r->label, r->id, r->patient, target));
      } else {
        AugmentedSample s = prepare_sample(image, nullptr, r->label, r->id, r->patient, target);
        if (policy == MapPolicy::attention_pool) s.attn_map = produce_map(*producer, s.image);
        out.push_back(std::move(s));
      }
    } catch (const Error& e) {
      problems.push_back(r->id + ": " + e.what());
    }
  }
  if (!problems.empty()) {
    std::string msg = std::to_string(problems.size()) + " record(s) in split " + split_name(split) + " failed to load:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw InputError(msg);
  }
  return out;
}

Tensor stack_batch(const std::vector<Tensor>& items) {
  if (items.empty()) throw ContractError("stack_batch: no items");
  const Shape one = items.front().shape();
  const DType dt = items.front().dtype();
  Tensor out = Tensor::zeros({static_cast<std::int64_t>(items.size()), one.c, one.h, one.w}, dt);
  visit_dtype(dt, [&](auto tag) {
    using T = decltype(tag);
    auto dst = out.data<T>();
    const std::int64_t per = one.c * one.plane();
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (!(items[i].shape() == one) || items[i].dtype() != dt) {
        throw DimensionError("stack_batch: item " + items[i].shape().str() + " vs " + one.str());
      }
      auto src = items[i].data<T>();
      std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(i) * per);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Training

namespace {

Tensor batch_input(const Dataset& data, std::span<const std::size_t> idx, DType dtype,
                   const std::function<Tensor(std::size_t)>& transform) {
  std::vector<Tensor> items;
  items.reserve(idx.size());
  for (std::size_t i : idx) items.push_back(transform ? transform(i) : data.inputs[i]);
  Tensor x = stack_batch(items);
  return x.dtype() == dtype ? x : x.to(dtype);
}

StateDict deep_copy(const StateDict& s) {
  StateDict out;
  out.reserve(s.size());
  for (const auto& e : s) out.push_back({e.name, e.tensor.clone(), e.trainable});
  return out;
}

}  // namespace

TrainResult train(Classifier& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& config,
                  const TrainHooks& hooks) {
  config.validate();
  if (train_set.size() == 0) throw InputError("training split is empty");
  if (val_set.size() == 0) throw InputError("validation split is empty");

  Adam opt(model.parameters(), AdamConfig{config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
  EarlyStopping stopper(config.patience, config.max_epochs);
  TrainResult result;
  const auto start = std::chrono::steady_clock::now();

  std::vector<std::size_t> order(train_set.size());
  const auto bs = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 1; !stopper.should_stop(); ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = make_rng(config.seed, "shuffle", static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const std::uint64_t augment_root = derive_seed(config.seed, "augment", static_cast<std::uint64_t>(epoch));
    auto transform = [&](std::size_t i) {
      Rng rng = make_rng(augment_root, train_set.ids[i]);
      return augment(train_set.inputs[i], rng);
    };

    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0, batch = 0; b < order.size(); b += bs, ++batch) {
      const std::span<const std::size_t> idx(order.data() + b, std::min(bs, order.size() - b));
      const Tensor x = batch_input(train_set, idx, model.dtype(),
                                   config.augment ? std::function<Tensor(std::size_t)>(transform) : nullptr);
      std::vector<int> labels;
      for (std::size_t i : idx) labels.push_back(train_set.labels[i]);

      opt.zero_grad();
      const Tensor loss = cross_entropy(model.forward(x, Mode::train), labels);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch));
      }
      backward(loss);
      opt.step();
      loss_sum += value * static_cast<double>(idx.size());
      seen += idx.size();
    }

    EpochLog row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(seen);
    if (hooks.override_validation) {
      std::tie(row.val_auc, row.val_accuracy) = hooks.override_validation(epoch);
    } else {
      const MetricsReport val = evaluate(model, val_set);
      row.val_auc = val.auc;
      row.val_accuracy = val.accuracy;
    }
    row.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(row);
    if (hooks.on_epoch) hooks.on_epoch(row);

    const double monitored = config.monitor == Monitor::auc ? row.val_auc : row.val_accuracy;
    if (stopper.update(monitored)) result.best_state = deep_copy(model.state());
  }
  result.best_epoch = stopper.best_epoch();
  result.best_value = stopper.best_value();
  result.stopped_early = stopper.epochs() < config.max_epochs;
  load_state(model, result.best_state);
  return result;
}

std::vector<double> predict(Classifier& model, const Dataset& data, int batch_size) {
  NoGradGuard no_grad;
  std::vector<double> scores;
  scores.reserve(data.size());
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto bs = static_cast<std::size_t>(std::max(batch_size, 1));
  for (std::size_t b = 0; b < idx.size(); b += bs) {
    const std::span<const std::size_t> part(idx.data() + b, std::min(bs, idx.size() - b));
    const Tensor probs = softmax(model.forward(batch_input(data, part, model.dtype(), nullptr), Mode::eval));
    if (probs.shape().c < 2) throw DimensionError("predict: need at least two classes, got " + probs.shape().str());
    for (std::int64_t n = 0; n < probs.shape().n; ++n) scores.push_back(probs.at(n, 1, 0, 0));
  }
  return scores;
}

MetricsReport evaluate(Classifier& model, const Dataset& data, int batch_size) {
  const std::vector<double> scores = predict(model, data, batch_size);
  return evaluate_scores(scores, data.labels);
}

// ---------------------------------------------------------------------------
// Log files

void write_log_header(const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot write " + path.string());
  os << "epoch,train_loss,val_auc,val_accuracy,elapsed_s\n";
}

void append_log(const std::filesystem::path& path, const EpochLog& row) {
  std::ofstream os(path, std::ios::app);
  if (!os) throw InputError("cannot append to " + path.string());
  os << std::setprecision(17) << row.epoch << ',' << row.train_loss << ',' << row.val_auc << ',' << row.val_accuracy
     << ',' << std::setprecision(6) << row.elapsed_s << '\n';
}

std::vector<EpochLog> read_log(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open " + path.string());
  std::string line;
  std::getline(is, line);
  if (line != "epoch,train_loss,val_auc,val_accuracy,elapsed_s") throw InputError("unexpected log header in " + path.string());
  std::vector<EpochLog> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    EpochLog r;
    char comma = 0;
    ls >> r.epoch >> comma >> r.train_loss >> comma >> r.val_auc >> comma >> r.val_accuracy >> comma >> r.elapsed_s;
    if (!ls) throw InputError("malformed log row: " + line);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace phnet
