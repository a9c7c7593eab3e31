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

#include "phnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include "phnet/models.hpp"
#include "phnet/ops.hpp"
#include "phnet/tensor_io.hpp"

namespace phnet {

namespace {

void require_single(const Tensor& t, const char* what) {
  if (t.shape().n != 1) throw DimensionError(std::string(what) + ": expected one image, got " + t.shape().str());
}

}  // namespace

void AugmentedSample::validate() const {
  require_single(image, "sample image");
  require_single(attn_map, "sample map");
  const Shape& is = image.shape();
  const Shape& ms = attn_map.shape();
  if (is.c != 1 && is.c != 3) throw DimensionError("sample image must have 1 or 3 channels, got " + is.str());
  if (ms.c != 1 || ms.h != is.h || ms.w != is.w) {
    throw DimensionError("attention map " + ms.str() + " does not match image " + is.str());
  }
  for (double v : attn_map.to_vector()) {
    if (!(v >= 0.0 && v <= 1.0)) throw InputError("attention map of '" + id + "' has values outside [0,1]");
  }
}

Tensor stack_input(const AugmentedSample& sample) {
  const Shape& is = sample.image.shape();
  const Shape& ms = sample.attn_map.shape();
  if (is.n != ms.n || is.h != ms.h || is.w != ms.w) {
    throw DimensionError("stack_input: image " + is.str() + " vs map " + ms.str());
  }
  Tensor map = sample.attn_map.dtype() == sample.image.dtype() ? sample.attn_map : sample.attn_map.to(sample.image.dtype());
  const std::array<Tensor, 2> parts{sample.image, map};
  NoGradGuard no_grad;
  return concat_channels(parts);
}

std::pair<Tensor, Tensor> unstack_input(const Tensor& stacked) {
  const std::int64_t c = stacked.shape().c;
  if (c < 2) throw DimensionError("unstack_input: need at least 2 channels, got " + stacked.shape().str());
  NoGradGuard no_grad;
  return {slice_channels(stacked, 0, c - 1), slice_channels(stacked, c - 1, 1)};
}

Tensor standardize(const Tensor& image) {
  const Shape& s = image.shape();
  Tensor out = Tensor::zeros(s, image.dtype());
  visit_dtype(image.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto x = image.data<T>();
    auto y = out.data<T>();
    for (std::int64_t p = 0; p < s.n * s.c; ++p) {
      const T* src = x.data() + p * s.plane();
      T* dst = y.data() + p * s.plane();
      double mu = 0.0;
      for (std::int64_t i = 0; i < s.plane(); ++i) mu += src[i];
      mu /= static_cast<double>(s.plane());
      double var = 0.0;
      for (std::int64_t i = 0; i < s.plane(); ++i) var += (src[i] - mu) * (src[i] - mu);
      const double sd = std::max(std::sqrt(var / static_cast<double>(s.plane())), 1e-8);
      for (std::int64_t i = 0; i < s.plane(); ++i) dst[i] = static_cast<T>((src[i] - mu) / sd);
    }
  });
  return out;
}

Tensor preprocess(const Tensor& image, std::int64_t target) {
  if (image.numel() == 0 || image.shape().h <= 0 || image.shape().w <= 0) {
    throw InputError("preprocess: empty image " + image.shape().str());
  }
  if (target <= 0) throw InputError("preprocess: target size must be positive");
  const Shape& s = image.shape();
  const Tensor resized = (s.h == target && s.w == target) ? image : resize_bilinear(image, target, target);
  return standardize(resized);
}

Tensor minmax_rescale(const Tensor& map) {
  const Shape& s = map.shape();
  Tensor out = Tensor::zeros(s, map.dtype());
  visit_dtype(map.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto x = map.data<T>();
    auto y = out.data<T>();
    const std::int64_t per = s.c * s.plane();
    for (std::int64_t n = 0; n < s.n; ++n) {
      const T* src = x.data() + n * per;
      const auto [lo, hi] = std::minmax_element(src, src + per);
      const double range = static_cast<double>(*hi) - static_cast<double>(*lo);
      if (range <= 0.0) continue;
      for (std::int64_t i = 0; i < per; ++i) y[n * per + i] = static_cast<T>((src[i] - *lo) / range);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Geometry

GeometricTransform GeometricTransform::draw(Rng& rng, double max_deg) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_real_distribution<double> angle(-max_deg, max_deg);
  GeometricTransform t;
  t.hflip = coin(rng) < 0.5;
  t.vflip = coin(rng) < 0.5;
  t.angle_deg = angle(rng);
  return t;
}

std::pair<double, double> transform_point(const GeometricTransform& t, double x, double y, std::int64_t height,
                                          std::int64_t width) {
  const double cx = (static_cast<double>(width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(height) - 1.0) / 2.0;
  if (t.hflip) x = 2.0 * cx - x;
  if (t.vflip) y = 2.0 * cy - y;
  const double th = t.angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(th);
  const double s = std::sin(th);
  const double dx = x - cx;
  const double dy = y - cy;
  return {cx + c * dx + s * dy, cy - s * dx + c * dy};
}

Tensor apply_transform(const Tensor& x, const GeometricTransform& t) {
  const Shape& s = x.shape();
  if (!t.hflip && !t.vflip && t.angle_deg == 0.0) return x.clone();
  Tensor out = Tensor::zeros(s, x.dtype());
  const double cx = (static_cast<double>(s.w) - 1.0) / 2.0;
  const double cy = (static_cast<double>(s.h) - 1.0) / 2.0;
  const double th = t.angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(th);
  const double sn = std::sin(th);
  visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = x.data<T>();
    auto o = out.data<T>();
    for (std::int64_t oy = 0; oy < s.h; ++oy) {
      for (std::int64_t ox = 0; ox < s.w; ++ox) {
        // Inverse rotation, then inverse flips (flips are involutions).
        const double dx = static_cast<double>(ox) - cx;
        const double dy = static_cast<double>(oy) - cy;
        double sx = cx + c * dx - sn * dy;
        double sy = cy + sn * dx + c * dy;
        if (t.hflip) sx = 2.0 * cx - sx;
        if (t.vflip) sy = 2.0 * cy - sy;
        const double fx0 = std::floor(sx);
        const double fy0 = std::floor(sy);
        const double fx = sx - fx0;
        const double fy = sy - fy0;
        const auto x0 = static_cast<std::int64_t>(fx0);
        const auto y0 = static_cast<std::int64_t>(fy0);
        for (std::int64_t p = 0; p < s.n * s.c; ++p) {
          const T* src = in.data() + p * s.plane();
          auto px = [&](std::int64_t yy, std::int64_t xx) -> double {
            return (yy >= 0 && yy < s.h && xx >= 0 && xx < s.w) ? static_cast<double>(src[yy * s.w + xx]) : 0.0;
          };
          double v;
          if (fx == 0.0 && fy == 0.0) {
            v = px(y0, x0);
          } else {
            v = (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
                fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
          }
          o[p * s.plane() + oy * s.w + ox] = static_cast<T>(v);
        }
      }
    }
  });
  return out;
}

Tensor augment(const Tensor& x, Rng& rng) { return apply_transform(x, GeometricTransform::draw(rng)); }

// ---------------------------------------------------------------------------
// Manifests

const char* split_name(Split split) {
  switch (split) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "?";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  throw InputError("unknown split '" + text + "'");
}

void Manifest::validate() const {
  std::set<std::string> ids;
  std::map<std::string, Split> patient_split;
  for (const auto& r : records) {
    if (!ids.insert(r.id).second) throw InputError("manifest: duplicate id '" + r.id + "'");
    if (r.patient.empty()) continue;
    auto [it, fresh] = patient_split.emplace(r.patient, r.split);
    if (!fresh && it->second != r.split) {
      throw InputError("manifest: patient '" + r.patient + "' appears in splits " + split_name(it->second) +
                       " and " + split_name(r.split));
    }
  }
}

std::vector<const ManifestRecord*> Manifest::in_split(Split split) const {
  std::vector<const ManifestRecord*> out;
  for (const auto& r : records) {
    if (r.split == split) out.push_back(&r);
  }
  return out;
}

std::filesystem::path Manifest::resolve(const std::string& relative) const {
  const std::filesystem::path p(relative);
  return p.is_absolute() ? p : base_dir / p;
}

namespace {

std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  return out + "\"";
}

}  // namespace

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw InputError("manifest " + path.string() + " is empty");
  const auto header = parse_csv_line(line);
  const std::vector<std::string> expected{"id", "image", "map", "label", "patient", "split"};
  if (header != expected) throw InputError("manifest header must be id,image,map,label,patient,split");
  Manifest m;
  m.base_dir = path.parent_path();
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = parse_csv_line(line);
    if (f.size() != expected.size()) {
      throw InputError("manifest line " + std::to_string(lineno) + ": expected 6 fields, got " + std::to_string(f.size()));
    }
    ManifestRecord r;
    r.id = f[0];
    r.image = f[1];
    r.map = f[2];
    try {
      r.label = std::stoi(f[3]);
    } catch (...) {
      throw InputError("manifest line " + std::to_string(lineno) + ": bad label '" + f[3] + "'");
    }
    r.patient = f[4];
    r.split = parse_split(f[5]);
    m.records.push_back(std::move(r));
  }
  m.validate();
  return m;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  os << "id,image,map,label,patient,split\n";
  for (const auto& r : manifest.records) {
    os << csv_field(r.id) << ',' << csv_field(r.image) << ',' << csv_field(r.map) << ',' << r.label << ','
       << csv_field(r.patient) << ',' << split_name(r.split) << '\n';
  }
}

std::vector<ManifestRecord> split_stratified(std::vector<ManifestRecord> records, std::array<double, 3> fractions,
                                             bool by_patient, std::uint64_t seed) {
  const double total = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(total - 1.0) > 1e-9 || *std::min_element(fractions.begin(), fractions.end()) < 0.0) {
    throw ConfigError("split fractions must be non-negative and sum to 1");
  }
  const auto active = static_cast<std::size_t>(std::count_if(fractions.begin(), fractions.end(), [](double f) { return f > 0.0; }));

  // Units that move atomically: patients, or single records.
  std::map<std::string, std::vector<std::size_t>> by_unit;
  std::vector<std::string> unit_order;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::string key = (by_patient && !records[i].patient.empty()) ? "p:" + records[i].patient : "r:" + std::to_string(i);
    auto [it, fresh] = by_unit.try_emplace(key);
    if (fresh) unit_order.push_back(key);
    it->second.push_back(i);
  }
  std::map<int, std::vector<std::string>> units_of_class;
  std::map<int, std::size_t> records_of_class;
  for (const auto& key : unit_order) {
    const auto& members = by_unit[key];
    std::map<int, std::size_t> votes;
    for (std::size_t i : members) ++votes[records[i].label];
    const int label = std::max_element(votes.begin(), votes.end(), [](const auto& a, const auto& b) { return a.second < b.second; })->first;
    units_of_class[label].push_back(key);
    records_of_class[label] += members.size();
  }

  Rng rng = make_rng(seed, "split");
  for (auto& [label, units] : units_of_class) {
    if (units.size() < active) {
      throw StratificationError("class " + std::to_string(label) + " has " + std::to_string(units.size()) +
                                " units, fewer than the " + std::to_string(active) + " requested splits");
    }
    std::shuffle(units.begin(), units.end(), rng);

    // Largest-remainder allocation of this class's records to the splits.
    const auto n_class = static_cast<double>(records_of_class[label]);
    std::array<std::int64_t, 3> target{};
    std::array<double, 3> remainder{};
    std::int64_t assigned = 0;
    for (int s = 0; s < 3; ++s) {
      const double exact = fractions[s] * n_class;
      target[s] = static_cast<std::int64_t>(std::floor(exact));
      remainder[s] = exact - static_cast<double>(target[s]);
      assigned += target[s];
    }
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return remainder[a] > remainder[b]; });
    for (int k = 0; assigned < static_cast<std::int64_t>(n_class); ++k, ++assigned) ++target[order[k % 3]];

    std::array<std::int64_t, 3> filled{};
    for (const auto& key : units) {
      // Split with the largest remaining deficit; ties go to the earlier split.
      int best = 0;
      std::int64_t best_deficit = std::numeric_limits<std::int64_t>::min();
      for (int s = 0; s < 3; ++s) {
        if (fractions[s] <= 0.0) continue;
        const std::int64_t deficit = target[s] - filled[s];
        if (deficit > best_deficit) {
          best_deficit = deficit;
          best = s;
        }
      }
      // Make sure every active split receives at least one unit of the class.
      for (int s = 0; s < 3; ++s) {
        if (fractions[s] > 0.0 && filled[s] == 0 && target[s] > 0 && best_deficit <= 0) best = s;
      }
      for (std::size_t i : by_unit[key]) records[i].split = static_cast<Split>(best);
      filled[best] += static_cast<std::int64_t>(by_unit[key].size());
    }
  }
  return records;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

void SyntheticConfig::validate() const {
  if (image_size < 8) throw ConfigError("synthetic image_size must be >= 8");
  if (count < 1) throw ConfigError("synthetic count must be >= 1");
  if (channels != 1 && channels != 3) throw ConfigError("synthetic channels must be 1 or 3");
  if (!(radius_min > 0.0) || radius_max < radius_min) throw ConfigError("synthetic radius range is empty");
  if (2.0 * std::ceil(radius_max) + 4.0 >= static_cast<double>(image_size)) {
    throw ConfigError("lesion radius " + std::to_string(radius_max) + " does not fit a " +
                      std::to_string(image_size) + " px image");
  }
  if (noise_scale < 0.0 || texture_sigma < 0.0) throw ConfigError("synthetic noise parameters must be >= 0");
  if (fidelity < 0.0 || fidelity > 1.0) throw ConfigError("map fidelity must be in [0,1]");
  if (positive_fraction <= 0.0 || positive_fraction >= 1.0) throw ConfigError("positive_fraction must be in (0,1)");
  if (images_per_patient < 0) throw ConfigError("images_per_patient must be >= 0");
}

namespace {

/// Separable Gaussian blur of a size x size field.
std::vector<double> blur(const std::vector<double>& in, std::int64_t size, double sigma) {
  if (sigma <= 0.0) return in;
  const auto radius = static_cast<std::int64_t>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double ksum = 0.0;
  for (std::int64_t k = -radius; k <= radius; ++k) {
    kernel[static_cast<std::size_t>(k + radius)] = std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma));
    ksum += kernel[static_cast<std::size_t>(k + radius)];
  }
  for (auto& k : kernel) k /= ksum;
  auto clampi = [size](std::int64_t v) { return std::clamp<std::int64_t>(v, 0, size - 1); };
  std::vector<double> tmp(in.size()), out(in.size());
  for (std::int64_t y = 0; y < size; ++y)
    for (std::int64_t x = 0; x < size; ++x) {
      double acc = 0.0;
      for (std::int64_t k = -radius; k <= radius; ++k) acc += kernel[static_cast<std::size_t>(k + radius)] * in[y * size + clampi(x + k)];
      tmp[y * size + x] = acc;
    }
  for (std::int64_t y = 0; y < size; ++y)
    for (std::int64_t x = 0; x < size; ++x) {
      double acc = 0.0;
      for (std::int64_t k = -radius; k <= radius; ++k) acc += kernel[static_cast<std::size_t>(k + radius)] * tmp[clampi(y + k) * size + x];
      out[y * size + x] = acc;
    }
  return out;
}

/// Zero-mean, unit-std smooth noise field.
std::vector<double> texture(Rng& rng, std::int64_t size, double sigma) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> field(static_cast<std::size_t>(size * size));
  for (auto& v : field) v = normal(rng);
  field = blur(field, size, sigma);
  double mu = std::accumulate(field.begin(), field.end(), 0.0) / static_cast<double>(field.size());
  double var = 0.0;
  for (double v : field) var += (v - mu) * (v - mu);
  const double sd = std::max(std::sqrt(var / static_cast<double>(field.size())), 1e-12);
  for (auto& v : field) v = (v - mu) / sd;
  return field;
}

std::string padded(const char* prefix, std::int64_t i) {
  std::ostringstream os;
  os << prefix;
  os.width(5);
  os.fill('0');
  os << i;
  return os.str();
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  const std::int64_t size = config.image_size;
  const std::int64_t units =
      config.images_per_patient > 0 ? (config.count + config.images_per_patient - 1) / config.images_per_patient : config.count;
  const auto positives = static_cast<std::int64_t>(std::llround(config.positive_fraction * static_cast<double>(units)));
  std::vector<int> unit_labels(static_cast<std::size_t>(units), 0);
  std::fill(unit_labels.begin(), unit_labels.begin() + positives, 1);
  Rng label_rng = make_rng(config.seed, "synthetic-labels");
  std::shuffle(unit_labels.begin(), unit_labels.end(), label_rng);

  SyntheticCorpus corpus;
  for (std::int64_t i = 0; i < config.count; ++i) {
    Rng rng = make_rng(config.seed, "synthetic-sample", static_cast<std::uint64_t>(i));
    const std::int64_t unit = config.images_per_patient > 0 ? i / config.images_per_patient : i;
    const int label = unit_labels[static_cast<std::size_t>(unit)];

    std::uniform_real_distribution<double> radius_dist(config.radius_min, config.radius_max);
    const double radius = radius_dist(rng);
    const auto margin = static_cast<std::int64_t>(std::ceil(radius)) + 1;
    std::uniform_int_distribution<std::int64_t> center(margin, size - margin - 1);
    const std::int64_t cx = center(rng);
    const std::int64_t cy = center(rng);

    const auto base = texture(rng, size, config.texture_sigma);
    const auto lesion_texture = texture(rng, size, 1.0);
    Tensor image = Tensor::zeros({1, config.channels, size, size});
    for (int c = 0; c < config.channels; ++c) {
      const auto own = config.channels > 1 ? texture(rng, size, config.texture_sigma) : std::vector<double>{};
      for (std::int64_t y = 0; y < size; ++y) {
        for (std::int64_t x = 0; x < size; ++x) {
          const std::size_t k = static_cast<std::size_t>(y * size + x);
          double v = base[k];
          if (!own.empty()) v = (v + 0.3 * own[k]) / std::sqrt(1.09);
          v *= config.noise_scale;
          if (label == 1) {
            const double d = std::hypot(static_cast<double>(x - cx), static_cast<double>(y - cy));
            const double edge = std::clamp(radius - d + 0.5, 0.0, 1.0);
            v += edge * config.contrast * (1.0 + 0.5 * lesion_texture[k]);
          }
          image.set(0, c, y, x, v);
        }
      }
    }

    // Map blob: on the lesion for positives, a decoy location for negatives.
    const std::int64_t mx = label == 1 ? cx : center(rng);
    const std::int64_t my = label == 1 ? cy : center(rng);
    std::uniform_real_distribution<double> unit01(0.0, 1.0);
    Tensor map = Tensor::zeros({1, 1, size, size});
    for (std::int64_t y = 0; y < size; ++y) {
      for (std::int64_t x = 0; x < size; ++x) {
        const double d2 = static_cast<double>((x - mx) * (x - mx) + (y - my) * (y - my));
        const double blob = std::exp(-d2 / (2.0 * radius * radius));
        map.set(0, 0, y, x, config.fidelity * blob + (1.0 - config.fidelity) * unit01(rng));
      }
    }

    AugmentedSample sample;
    sample.image = image;
    sample.attn_map = minmax_rescale(map);
    sample.label = label;
    sample.id = padded("s", i);
    if (config.images_per_patient > 0) sample.patient_id = padded("p", unit);
    corpus.samples.push_back(std::move(sample));
    corpus.lesions.push_back({label == 1, mx, my, radius});
  }

  std::vector<ManifestRecord> records;
  for (const auto& s : corpus.samples) {
    records.push_back({s.id, "images/" + s.id + ".pht", "maps/" + s.id + ".pht", s.label, s.patient_id, Split::train});
  }
  corpus.manifest.records = split_stratified(std::move(records), config.split_fractions, config.images_per_patient > 0,
                                             derive_seed(config.seed, "synthetic-split"));
  return corpus;
}

void write_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "maps");
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    const auto& rec = corpus.manifest.records[i];
    save_tensor(dir / rec.image, corpus.samples[i].image);
    save_tensor(dir / rec.map, corpus.samples[i].attn_map);
  }
  write_manifest(corpus.manifest, dir / "manifest.csv");
}

}  // namespace phnet
