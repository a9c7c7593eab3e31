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

#include "phnet/models.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace phnet {

// ---------------------------------------------------------------------------
// Layers

BatchNorm2d BatchNorm2d::create(std::int64_t channels, DType dtype) {
  BatchNorm2d bn;
  bn.gamma = Tensor::full({channels, 1, 1, 1}, 1.0, dtype).set_requires_grad(true);
  bn.beta = Tensor::zeros({channels, 1, 1, 1}, dtype).set_requires_grad(true);
  bn.stats = RunningStats::init(channels, dtype);
  return bn;
}

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode) {
  return batch_norm(x, gamma, beta, stats, mode);
}

void BatchNorm2d::collect(const std::string& prefix, StateDict& out) const {
  out.push_back({prefix + ".gamma", gamma, true});
  out.push_back({prefix + ".beta", beta, true});
  out.push_back({prefix + ".running_mean", stats.mean, false});
  out.push_back({prefix + ".running_var", stats.var, false});
}

Linear Linear::create(std::int64_t in_features, std::int64_t out_features, Rng& rng, DType dtype) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
  std::uniform_real_distribution<double> uniform(-bound, bound);
  std::vector<double> values(static_cast<std::size_t>(in_features * out_features));
  for (auto& v : values) v = uniform(rng);
  Linear l;
  l.weight = Tensor::from_values({out_features, in_features, 1, 1}, values, dtype).set_requires_grad(true);
  l.bias = Tensor::zeros({out_features, 1, 1, 1}, dtype).set_requires_grad(true);
  return l;
}

void Linear::collect(const std::string& prefix, StateDict& out) const {
  out.push_back({prefix + ".weight", weight, true});
  out.push_back({prefix + ".bias", bias, true});
}

void collect_phc(const PHCLayer& layer, const std::string& prefix, StateDict& out) {
  if (layer.algebra_learnable) out.push_back({prefix + ".algebra", layer.algebra, true});
  for (std::size_t i = 0; i < layer.filters.size(); ++i) {
    out.push_back({prefix + ".filter" + std::to_string(i), layer.filters[i], true});
  }
  if (layer.bias.defined()) out.push_back({prefix + ".bias", layer.bias, true});
}

// ---------------------------------------------------------------------------
// Residual blocks

ResidualBlock ResidualBlock::basic(int n, std::int64_t in_channels, std::int64_t width, int stride,
                                   Rng& rng, DType dtype) {
  ResidualBlock b;
  b.convs.push_back(PHCLayer::create(n, in_channels, width, 3, {stride, 1, false}, rng, dtype));
  b.norms.push_back(BatchNorm2d::create(width, dtype));
  b.convs.push_back(PHCLayer::create(n, width, width, 3, {1, 1, false}, rng, dtype));
  b.norms.push_back(BatchNorm2d::create(width, dtype));
  if (stride != 1 || in_channels != width) {
    b.shortcut = Shortcut{PHCLayer::create(n, in_channels, width, 1, {stride, 0, false}, rng, dtype),
                          BatchNorm2d::create(width, dtype)};
  }
  return b;
}

ResidualBlock ResidualBlock::bottleneck(int n, std::int64_t in_channels, std::int64_t width,
                                        int expansion, int stride, Rng& rng, DType dtype) {
  const std::int64_t out = width * expansion;
  ResidualBlock b;
  b.convs.push_back(PHCLayer::create(n, in_channels, width, 1, {1, 0, false}, rng, dtype));
  b.norms.push_back(BatchNorm2d::create(width, dtype));
  b.convs.push_back(PHCLayer::create(n, width, width, 3, {stride, 1, false}, rng, dtype));
  b.norms.push_back(BatchNorm2d::create(width, dtype));
  b.convs.push_back(PHCLayer::create(n, width, out, 1, {1, 0, false}, rng, dtype));
  b.norms.push_back(BatchNorm2d::create(out, dtype));
  if (stride != 1 || in_channels != out) {
    b.shortcut = Shortcut{PHCLayer::create(n, in_channels, out, 1, {stride, 0, false}, rng, dtype),
                          BatchNorm2d::create(out, dtype)};
  }
  return b;
}

void ResidualBlock::collect(const std::string& prefix, StateDict& out) const {
  for (std::size_t i = 0; i < convs.size(); ++i) {
    collect_phc(convs[i], prefix + ".conv" + std::to_string(i + 1), out);
    norms[i].collect(prefix + ".bn" + std::to_string(i + 1), out);
  }
  if (shortcut) {
    collect_phc(shortcut->conv, prefix + ".shortcut.conv", out);
    shortcut->norm.collect(prefix + ".shortcut.bn", out);
  }
}

Tensor ph_residual_block(const Tensor& x, ResidualBlock& block, Mode mode) {
  Tensor h = x;
  for (std::size_t i = 0; i < block.convs.size(); ++i) {
    h = block.norms[i].forward(block.convs[i].forward(h), mode);
    if (i + 1 < block.convs.size()) h = relu(h);
  }
  Tensor skip = x;
  if (block.shortcut) skip = block.shortcut->norm.forward(block.shortcut->conv.forward(x), mode);
  if (skip.shape() != h.shape()) {
    throw DimensionError("residual block: branch " + h.shape().str() + " vs shortcut " + skip.shape().str());
  }
  return relu(add(h, skip));
}

// ---------------------------------------------------------------------------
// ModelSpec

const char* depth_name(Depth depth) {
  switch (depth) {
    case Depth::d18:
      return "18";
    case Depth::d50:
      return "50";
    case Depth::mini:
      return "mini";
  }
  return "?";
}

Depth parse_depth(const std::string& text) {
  if (text == "18") return Depth::d18;
  if (text == "50") return Depth::d50;
  if (text == "mini") return Depth::mini;
  throw ConfigError("unknown depth '" + text + "' (expected 18, 50 or mini)");
}

ModelSpec ModelSpec::standard(Depth depth, int n, int in_channels, int num_classes) {
  ModelSpec s;
  s.depth = depth;
  s.n = n;
  s.in_channels = in_channels;
  s.num_classes = num_classes;
  switch (depth) {
    case Depth::d18:
      s.stage_widths = {64, 128, 256, 512};
      s.blocks = {2, 2, 2, 2};
      break;
    case Depth::d50:
      s.stage_widths = {64, 128, 256, 512};
      s.blocks = {3, 4, 6, 3};
      s.expansion = 2;
      break;
    case Depth::mini:
      s.stage_widths = {16, 32};
      s.blocks = {1, 1};
      break;
  }
  if (n > 0) {
    for (int& w : s.stage_widths) w -= w % n;
  }
  return s;
}

void ModelSpec::validate() const {
  if (n < 1 || n > 8) throw ConfigError("algebra dimension n must be in [1, 8], got " + std::to_string(n));
  if (in_channels < 1 || num_classes < 1) throw ConfigError("in_channels and num_classes must be positive");
  if (in_channels % n != 0) {
    throw AlgebraError("in_channels " + std::to_string(in_channels) + " not divisible by n = " + std::to_string(n));
  }
  if (stage_widths.empty() || stage_widths.size() != blocks.size()) {
    throw ConfigError("stage_widths and blocks must be non-empty and of equal length");
  }
  if (expansion < 1) throw ConfigError("expansion must be positive");
  if (stem.kernel < 1 || stem.stride < 1) throw ConfigError("invalid stem geometry");
  for (std::size_t i = 0; i < stage_widths.size(); ++i) {
    const int w = stage_widths[i];
    if (w <= 0 || blocks[i] <= 0) throw ConfigError("stage widths and block counts must be positive");
    if (w % n != 0 || (w * expansion) % n != 0) {
      throw AlgebraError("stage width " + std::to_string(w) + " not divisible by n = " + std::to_string(n));
    }
  }
  if (depth == Depth::mini) {
    const int total = std::accumulate(blocks.begin(), blocks.end(), 0);
    const int widest = *std::max_element(stage_widths.begin(), stage_widths.end());
    if (total > 4 || widest > 64) throw ConfigError("mini models allow at most 4 blocks and width 64");
  }
}

nlohmann::json ModelSpec::to_json() const {
  return {{"kind", "phresnet"},
          {"depth", depth_name(depth)},
          {"n", n},
          {"in_channels", in_channels},
          {"num_classes", num_classes},
          {"stage_widths", stage_widths},
          {"blocks", blocks},
          {"expansion", expansion},
          {"stem", {{"kernel", stem.kernel}, {"stride", stem.stride}, {"max_pool", stem.max_pool}}},
          {"dtype", dtype_name(dtype)}};
}

namespace {
DType parse_dtype(const std::string& s) {
  if (s == "f32") return DType::f32;
  if (s == "f64") return DType::f64;
  throw ConfigError("unknown dtype '" + s + "'");
}
}  // namespace

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  try {
    const Depth depth = parse_depth(j.value("depth", std::string("18")));
    ModelSpec s = standard(depth, j.value("n", 1), j.value("in_channels", 3), j.value("num_classes", 2));
    if (j.contains("stage_widths")) s.stage_widths = j.at("stage_widths").get<std::vector<int>>();
    if (j.contains("blocks")) s.blocks = j.at("blocks").get<std::vector<int>>();
    if (j.contains("expansion")) s.expansion = j.at("expansion").get<int>();
    if (j.contains("stem")) {
      const auto& st = j.at("stem");
      s.stem.kernel = st.value("kernel", s.stem.kernel);
      s.stem.stride = st.value("stride", s.stem.stride);
      s.stem.max_pool = st.value("max_pool", s.stem.max_pool);
    }
    if (j.contains("dtype")) s.dtype = parse_dtype(j.at("dtype").get<std::string>());
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model spec: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Classifier

std::vector<StateEntry> Classifier::parameters() const {
  std::vector<StateEntry> out;
  for (auto& e : state()) {
    if (e.trainable) out.push_back(e);
  }
  return out;
}

std::int64_t count_params(const PHCLayer& layer) { return layer.param_count(); }

std::int64_t count_params(const Classifier& model) {
  std::int64_t total = 0;
  for (const auto& e : model.parameters()) total += e.tensor.numel();
  return total;
}

PHResNet::PHResNet(const ModelSpec& spec, Rng& rng) : spec_(spec) {
  spec_.validate();
  const int n = spec_.n;
  const DType dt = spec_.dtype;
  const std::int64_t stem_width = spec_.stage_widths.front();
  stem_conv_ = PHCLayer::create(n, spec_.in_channels, stem_width, spec_.stem.kernel,
                                {spec_.stem.stride, spec_.stem.kernel / 2, false}, rng, dt);
  stem_norm_ = BatchNorm2d::create(stem_width, dt);
  std::int64_t channels = stem_width;
  for (std::size_t s = 0; s < spec_.stage_widths.size(); ++s) {
    std::vector<ResidualBlock> stage;
    for (int b = 0; b < spec_.blocks[s]; ++b) {
      const int stride = (b == 0 && s > 0) ? 2 : 1;
      if (spec_.bottleneck()) {
        stage.push_back(ResidualBlock::bottleneck(n, channels, spec_.stage_widths[s], spec_.expansion, stride, rng, dt));
      } else {
        stage.push_back(ResidualBlock::basic(n, channels, spec_.stage_widths[s], stride, rng, dt));
      }
      channels = stage.back().out_channels();
    }
    stages_.push_back(std::move(stage));
  }
  fc_ = Linear::create(channels, spec_.num_classes, rng, dt);
}

Tensor PHResNet::features(const Tensor& x, Mode mode) {
  Tensor h = relu(stem_norm_.forward(stem_conv_.forward(x), mode));
  if (spec_.stem.max_pool) h = max_pool2d(h, 3, 2, 1);
  for (auto& stage : stages_) {
    for (auto& block : stage) h = ph_residual_block(h, block, mode);
  }
  return h;
}

Tensor PHResNet::forward(const Tensor& x, Mode mode) {
  return fc_.forward(global_avg_pool(features(x, mode)));
}

StateDict PHResNet::state() const {
  StateDict out;
  collect_phc(stem_conv_, "stem.conv", out);
  stem_norm_.collect("stem.bn", out);
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    for (std::size_t b = 0; b < stages_[s].size(); ++b) {
      stages_[s][b].collect("layer" + std::to_string(s + 1) + "." + std::to_string(b), out);
    }
  }
  fc_.collect("fc", out);
  return out;
}

nlohmann::json PHResNet::spec_json() const { return spec_.to_json(); }

std::unique_ptr<PHResNet> build_model(const ModelSpec& spec, std::uint64_t seed) {
  Rng rng = make_rng(seed, "init");
  return std::make_unique<PHResNet>(spec, rng);
}

// ---------------------------------------------------------------------------
// Attention pooling

AttentionPoolHead AttentionPoolHead::create(std::int64_t channels, std::int64_t key_dim, int num_classes,
                                            Rng& rng, DType dtype) {
  AttentionPoolHead h;
  std::normal_distribution<double> key_init(0.0, 1.0 / std::sqrt(static_cast<double>(channels)));
  std::vector<double> kv(static_cast<std::size_t>(key_dim * channels));
  for (auto& v : kv) v = key_init(rng);
  h.key_weight = Tensor::from_values({key_dim, channels, 1, 1}, kv, dtype).set_requires_grad(true);
  std::normal_distribution<double> query_init(0.0, 1.0 / std::sqrt(static_cast<double>(key_dim)));
  std::vector<double> qv(static_cast<std::size_t>(key_dim));
  for (auto& v : qv) v = query_init(rng);
  h.query = Tensor::from_values({1, key_dim, 1, 1}, qv, dtype).set_requires_grad(true);
  h.classifier = Linear::create(channels, num_classes, rng, dtype);
  return h;
}

void AttentionPoolHead::collect(const std::string& prefix, StateDict& out) const {
  out.push_back({prefix + ".key", key_weight, true});
  out.push_back({prefix + ".query", query, true});
  classifier.collect(prefix + ".fc", out);
}

AttentionOutput attention_pool_forward(const Tensor& features, const AttentionPoolHead& head,
                                       std::int64_t out_h, std::int64_t out_w) {
  const std::int64_t key_dim = head.query.shape().c;
  Tensor keys = conv2d(features, head.key_weight);
  Tensor scores = scale(conv2d(keys, head.query), 1.0 / std::sqrt(static_cast<double>(key_dim)));
  AttentionOutput out;
  out.weights = spatial_softmax(scores);
  out.logits = head.classifier.forward(attention_pool(out.weights, features));
  if (out_h > 0 && out_w > 0) {
    NoGradGuard no_grad;
    out.map = resize_bilinear(out.weights, out_h, out_w);
    visit_dtype(out.map.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto m = out.map.data<T>();
      const std::int64_t plane = out_h * out_w;
      for (std::int64_t s = 0; s < out.map.shape().n; ++s) {
        T* p = m.data() + s * plane;
        const T mx = *std::max_element(p, p + plane);
        if (mx > T(0)) {
          for (std::int64_t i = 0; i < plane; ++i) p[i] /= mx;
        }
      }
    });
  }
  return out;
}

nlohmann::json AttentionPoolSpec::to_json() const {
  return {{"kind", "attention_pool"}, {"in_channels", in_channels}, {"num_classes", num_classes},
          {"trunk_widths", trunk_widths}, {"key_dim", key_dim}, {"dtype", dtype_name(dtype)}};
}

AttentionPoolSpec AttentionPoolSpec::from_json(const nlohmann::json& j) {
  try {
    AttentionPoolSpec s;
    s.in_channels = j.value("in_channels", s.in_channels);
    s.num_classes = j.value("num_classes", s.num_classes);
    if (j.contains("trunk_widths")) s.trunk_widths = j.at("trunk_widths").get<std::vector<int>>();
    s.key_dim = j.value("key_dim", s.key_dim);
    if (j.contains("dtype")) s.dtype = parse_dtype(j.at("dtype").get<std::string>());
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("attention-pool spec: ") + e.what());
  }
}

AttentionPoolNet::AttentionPoolNet(const AttentionPoolSpec& spec, Rng& rng) : spec_(spec) {
  if (spec_.trunk_widths.empty() || spec_.key_dim < 1) throw ConfigError("attention-pool net needs a trunk and key_dim >= 1");
  std::int64_t channels = spec_.in_channels;
  for (int w : spec_.trunk_widths) {
    convs_.push_back(PHCLayer::create(1, channels, w, 3, {2, 1, false}, rng, spec_.dtype));
    norms_.push_back(BatchNorm2d::create(w, spec_.dtype));
    channels = w;
  }
  head_ = AttentionPoolHead::create(channels, spec_.key_dim, spec_.num_classes, rng, spec_.dtype);
}

Tensor AttentionPoolNet::trunk(const Tensor& x, Mode mode) {
  Tensor h = x;
  for (std::size_t i = 0; i < convs_.size(); ++i) h = relu(norms_[i].forward(convs_[i].forward(h), mode));
  return h;
}

Tensor AttentionPoolNet::forward(const Tensor& x, Mode mode) {
  return attention_pool_forward(trunk(x, mode), head_).logits;
}

AttentionOutput AttentionPoolNet::forward_with_map(const Tensor& x, Mode mode) {
  return attention_pool_forward(trunk(x, mode), head_, x.shape().h, x.shape().w);
}

StateDict AttentionPoolNet::state() const {
  StateDict out;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    collect_phc(convs_[i], "trunk" + std::to_string(i) + ".conv", out);
    norms_[i].collect("trunk" + std::to_string(i) + ".bn", out);
  }
  head_.collect("head", out);
  return out;
}

nlohmann::json AttentionPoolNet::spec_json() const { return spec_.to_json(); }

// ---------------------------------------------------------------------------

std::unique_ptr<Classifier> build_classifier(const nlohmann::json& spec, std::uint64_t seed) {
  const std::string kind = spec.value("kind", std::string("phresnet"));
  Rng rng = make_rng(seed, "init");
  if (kind == "phresnet") return std::make_unique<PHResNet>(ModelSpec::from_json(spec), rng);
  if (kind == "attention_pool") return std::make_unique<AttentionPoolNet>(AttentionPoolSpec::from_json(spec), rng);
  throw ConfigError("unknown model kind '" + kind + "'");
}

void load_state(Classifier& model, const StateDict& values) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& e : values) by_name[e.name] = &e.tensor;
  for (auto& e : model.state()) {
    auto it = by_name.find(e.name);
    if (it == by_name.end()) throw InputError("state is missing tensor '" + e.name + "'");
    if (it->second->shape() != e.tensor.shape()) {
      throw DimensionError("state tensor '" + e.name + "' has shape " + it->second->shape().str() +
                           ", model expects " + e.tensor.shape().str());
    }
    e.tensor.assign(*it->second);
  }
}

StateDict snapshot_state(const Classifier& model) {
  StateDict out;
  for (const auto& e : model.state()) out.push_back({e.name, e.tensor.clone(), e.trainable});
  return out;
}

Tensor resize_bilinear(const Tensor& x, std::int64_t out_h, std::int64_t out_w) {
  const Shape& s = x.shape();
  if (s.h <= 0 || s.w <= 0 || out_h <= 0 || out_w <= 0) throw InputError("resize_bilinear: empty image " + s.str());
  Tensor out = Tensor::zeros({s.n, s.c, out_h, out_w}, x.dtype());
  // Source coordinate of each destination row/column with half-pixel centers.
  auto axis = [](std::int64_t in, std::int64_t outn) {
    std::vector<std::tuple<std::int64_t, std::int64_t, double>> taps(static_cast<std::size_t>(outn));
    const double ratio = static_cast<double>(in) / static_cast<double>(outn);
    for (std::int64_t d = 0; d < outn; ++d) {
      double src = (static_cast<double>(d) + 0.5) * ratio - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const auto i0 = static_cast<std::int64_t>(std::floor(src));
      const std::int64_t i1 = std::min(i0 + 1, in - 1);
      taps[static_cast<std::size_t>(d)] = {i0, i1, src - static_cast<double>(i0)};
    }
    return taps;
  };
  const auto rows = axis(s.h, out_h);
  const auto cols = axis(s.w, out_w);
  visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = x.data<T>();
    auto o = out.data<T>();
    for (std::int64_t p = 0; p < s.n * s.c; ++p) {
      const T* src = in.data() + p * s.plane();
      T* dst = o.data() + p * out_h * out_w;
      for (std::int64_t r = 0; r < out_h; ++r) {
        const auto [y0, y1, fy] = rows[static_cast<std::size_t>(r)];
        for (std::int64_t c = 0; c < out_w; ++c) {
          const auto [x0, x1, fx] = cols[static_cast<std::size_t>(c)];
          const double top = (1.0 - fx) * src[y0 * s.w + x0] + fx * src[y0 * s.w + x1];
          const double bot = (1.0 - fx) * src[y1 * s.w + x0] + fx * src[y1 * s.w + x1];
          dst[r * out_w + c] = static_cast<T>((1.0 - fy) * top + fy * bot);
        }
      }
    }
  });
  return out;
}

}  // namespace phnet
