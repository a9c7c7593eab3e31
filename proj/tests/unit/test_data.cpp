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


#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <vector>

#include "oracles.hpp"
#include "phnet/data.hpp"
#include "phnet/ops.hpp"
#include "phnet/tensor_io.hpp"
#include "test_util.hpp"

using namespace phnet;
using phnet::test::randn;

namespace {

std::pair<std::int64_t, std::int64_t> argmax_xy(const Tensor& plane) {
  const auto v = plane.to_vector();
  const auto i = std::distance(v.begin(), std::max_element(v.begin(), v.end()));
  return {i % plane.shape().w, i / plane.shape().w};
}

std::pair<double, double> centroid(const Tensor& plane) {
  const auto v = plane.to_vector();
  double sx = 0.0, sy = 0.0, total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = static_cast<double>(static_cast<std::int64_t>(i) % plane.shape().w);
    const double y = static_cast<double>(static_cast<std::int64_t>(i) / plane.shape().w);
    sx += v[i] * x;
    sy += v[i] * y;
    total += v[i];
  }
  return {sx / total, sy / total};
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  return cov / std::sqrt(va * vb);
}

std::vector<ManifestRecord> balanced_records(int count, int patients_of = 0) {
  std::vector<ManifestRecord> out;
  for (int i = 0; i < count; ++i) {
    ManifestRecord r;
    r.id = "r" + std::to_string(i);
    r.image = r.id + ".pht";
    r.label = i % 2;
    if (patients_of > 0) r.patient = "p" + std::to_string(i / (2 * patients_of)) + "_" + std::to_string(i % 2);
    out.push_back(r);
  }
  return out;
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("stack_input shapes and channel order") {
  Rng rng(40);
  AugmentedSample gray{randn({1, 1, 384, 384}, rng, DType::f32), Tensor::zeros({1, 1, 384, 384}), 1, "a", ""};
  const Tensor g = stack_input(gray);
  CHECK(g.shape() == Shape{1, 2, 384, 384});
  CHECK(test::bitwise_equal(slice_channels(g, 0, 1), gray.image));
  for (double v : slice_channels(g, 1, 1).to_vector()) CHECK(v == 0.0);

  AugmentedSample rgb{randn({1, 3, 384, 384}, rng, DType::f32), Tensor::full({1, 1, 384, 384}, 0.5), 0, "b", ""};
  const Tensor s = stack_input(rgb);
  CHECK(s.shape() == Shape{1, 4, 384, 384});
  const auto [image, map] = unstack_input(s);
  CHECK(test::bitwise_equal(image, rgb.image));
  CHECK(test::bitwise_equal(map, rgb.attn_map));

  AugmentedSample bad{randn({1, 1, 8, 8}, rng, DType::f32), Tensor::zeros({1, 1, 8, 9}), 0, "c", ""};
  CHECK_THROWS_AS(stack_input(bad), DimensionError);
  CHECK_THROWS_AS(bad.validate(), DimensionError);
  AugmentedSample out_of_range{randn({1, 1, 4, 4}, rng, DType::f32), Tensor::full({1, 1, 4, 4}, 1.5), 0, "d", ""};
  CHECK_THROWS_AS(out_of_range.validate(), InputError);
}

TEST_CASE("standardization") {
  const Tensor constant = Tensor::full({1, 3, 16, 16}, 4.0);
  for (double v : preprocess(constant, 16).to_vector()) CHECK(v == 0.0);

  Rng rng(41);
  const Tensor x = randn({1, 3, 384, 384}, rng, DType::f64, 3.0);
  const Tensor y = preprocess(x);
  CHECK(y.shape() == x.shape());
  const auto v = y.to_vector();
  const std::size_t plane = 384 * 384;
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      s += v[c * plane + i];
      s2 += v[c * plane + i] * v[c * plane + i];
    }
    const double mean = s / static_cast<double>(plane);
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(std::sqrt(s2 / static_cast<double>(plane) - mean * mean) - 1.0) < 1e-6);
  }
  CHECK_THROWS_AS(preprocess(Tensor::zeros({1, 1, 0, 4})), InputError);
}

TEST_CASE("preprocess resize matches the naive bilinear oracle") {
  const std::int64_t src = 768, dst = 384;
  std::vector<double> board(static_cast<std::size_t>(src * src));
  for (std::int64_t y = 0; y < src; ++y) {
    for (std::int64_t x = 0; x < src; ++x) board[static_cast<std::size_t>(y * src + x)] = ((x / 5 + y / 7) % 2) ? 1.0 : 0.0;
  }
  const Tensor image = Tensor::from_values({1, 1, src, src}, board, DType::f64);
  const Tensor got = preprocess(image, dst);

  auto ref = oracle::naive_bilinear(board, src, src, dst, dst);
  double mean = 0.0;
  for (double v : ref) mean += v;
  mean /= static_cast<double>(ref.size());
  double var = 0.0;
  for (double v : ref) var += (v - mean) * (v - mean);
  const double sd = std::max(std::sqrt(var / static_cast<double>(ref.size())), 1e-8);
  for (double& v : ref) v = (v - mean) / sd;
  CHECK(test::max_abs_diff(got, Tensor::from_values({1, 1, dst, dst}, ref, DType::f64)) < 1e-5);
}

TEST_CASE("minmax rescale") {
  const std::vector<double> v{2.0, 4.0, 6.0, 3.0};
  const Tensor r = minmax_rescale(Tensor::from_values({1, 1, 2, 2}, v, DType::f64));
  CHECK(r.to_vector() == std::vector<double>{0.0, 0.5, 1.0, 0.25});
  for (double x : minmax_rescale(Tensor::full({1, 1, 3, 3}, 7.0)).to_vector()) CHECK(x == 0.0);
}

TEST_CASE("identity and involution transforms") {
  Rng rng(42);
  const Tensor x = randn({1, 2, 17, 13}, rng);
  CHECK(test::bitwise_equal(apply_transform(x, {}), x));
  const GeometricTransform h{true, false, 0.0};
  CHECK(test::bitwise_equal(apply_transform(apply_transform(x, h), h), x));
  const GeometricTransform v{false, true, 0.0};
  CHECK(test::bitwise_equal(apply_transform(apply_transform(x, v), v), x));
}

TEST_CASE("rotation moves a lesion centroid to the rotated coordinate") {
  const std::int64_t size = 64;
  const double lx = 20.0, ly = 40.0;
  Tensor x = Tensor::zeros({1, 2, size, size}, DType::f64);
  for (std::int64_t y = 0; y < size; ++y) {
    for (std::int64_t c = 0; c < size; ++c) {
      const double d = std::hypot(static_cast<double>(c) - lx, static_cast<double>(y) - ly);
      if (d <= 3.0) x.set(0, 0, y, c, 1.0);
      x.set(0, 1, y, c, std::exp(-d * d / 18.0));
    }
  }
  const Tensor r = apply_transform(x, {false, false, 10.0});
  // Counter-clockwise as displayed, y pointing down.
  const double cx = (size - 1) / 2.0, cy = (size - 1) / 2.0;
  const double th = 10.0 * std::numbers::pi / 180.0;
  const double ex = cx + std::cos(th) * (lx - cx) + std::sin(th) * (ly - cy);
  const double ey = cy - std::sin(th) * (lx - cx) + std::cos(th) * (ly - cy);
  for (int ch = 0; ch < 2; ++ch) {
    const auto [gx, gy] = centroid(slice_channels(r, ch, 1));
    CHECK(std::abs(gx - ex) <= 1.0);
    CHECK(std::abs(gy - ey) <= 1.0);
  }
  const auto [px, py] = transform_point({false, false, 10.0}, lx, ly, size, size);
  CHECK(px == doctest::Approx(ex));
  CHECK(py == doctest::Approx(ey));
}

TEST_CASE("augmentation draws stay within the configured ranges") {
  Rng rng(43);
  int h = 0, v = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto t = GeometricTransform::draw(rng);
    CHECK(std::abs(t.angle_deg) < 10.0);
    h += t.hflip;
    v += t.vflip;
  }
  CHECK(h > 900);
  CHECK(h < 1100);
  CHECK(v > 900);
  CHECK(v < 1100);
}

TEST_CASE("manifest round trip and validation") {
  test::TempDir dir("manifest");
  Manifest m;
  m.records = {{"a", "img/a.pht", "maps/a.png", 1, "p1", Split::train},
               {"b,2", "img/b \"q\".pht", "", 0, "", Split::val},
               {"c", "/abs/c.pgm", "m.pht", 0, "p2", Split::test}};
  write_manifest(m, dir / "manifest.csv");
  const Manifest back = read_manifest(dir / "manifest.csv");
  REQUIRE(back.records.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.records[i].id == m.records[i].id);
    CHECK(back.records[i].image == m.records[i].image);
    CHECK(back.records[i].map == m.records[i].map);
    CHECK(back.records[i].label == m.records[i].label);
    CHECK(back.records[i].patient == m.records[i].patient);
    CHECK(back.records[i].split == m.records[i].split);
  }
  CHECK(back.resolve("x.pht") == dir.path() / "x.pht");
  CHECK(back.resolve("/abs/c.pgm") == std::filesystem::path("/abs/c.pgm"));

  Manifest dup = m;
  dup.records[1].id = "a";
  CHECK_THROWS_AS(dup.validate(), InputError);
  Manifest leak = m;
  leak.records[2].patient = "p1";
  CHECK_THROWS_AS(leak.validate(), InputError);

  std::ofstream(dir / "bad.csv") << "id,image,label\n";
  CHECK_THROWS_AS(read_manifest(dir / "bad.csv"), InputError);
}

TEST_CASE("stratified split of 100 balanced records") {
  const auto out = split_stratified(balanced_records(100), {0.6, 0.2, 0.2}, false, 3);
  std::map<std::pair<int, int>, int> counts;
  for (const auto& r : out) ++counts[{static_cast<int>(r.split), r.label}];
  for (int label : {0, 1}) {
    CHECK(counts[{0, label}] == 30);
    CHECK(counts[{1, label}] == 10);
    CHECK(counts[{2, label}] == 10);
  }
  const auto again = split_stratified(balanced_records(100), {0.6, 0.2, 0.2}, false, 3);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i].split == again[i].split);
}

TEST_CASE("stratification bound holds on fuzzed record sets") {
  Rng rng(44);
  std::uniform_int_distribution<int> count(12, 300);
  std::uniform_real_distribution<double> frac(0.15, 0.85);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = count(rng);
    const double pos = frac(rng);
    std::vector<ManifestRecord> records;
    for (int i = 0; i < n; ++i) {
      ManifestRecord r;
      r.id = std::to_string(i);
      r.label = (i < static_cast<int>(pos * n)) ? 1 : 0;
      records.push_back(r);
    }
    int positives = 0;
    for (const auto& r : records) positives += r.label;
    if (positives < 3 || n - positives < 3) continue;
    const auto out = split_stratified(records, {0.6, 0.2, 0.2}, false, static_cast<std::uint64_t>(trial));
    const double global = static_cast<double>(positives) / n;
    for (int s = 0; s < 3; ++s) {
      int size = 0, pos_in = 0;
      for (const auto& r : out) {
        if (static_cast<int>(r.split) == s) {
          ++size;
          pos_in += r.label;
        }
      }
      REQUIRE(size > 0);
      CHECK(std::abs(static_cast<double>(pos_in) / size - global) <= 1.0 / size + 1e-12);
    }
  }
}

TEST_CASE("patient-wise split keeps patients atomic") {
  auto records = balanced_records(60);
  for (int i = 0; i < 5; ++i) records[static_cast<std::size_t>(i * 2)].patient = "many";
  for (std::size_t i = 10; i < records.size(); ++i) records[i].patient = "p" + std::to_string(i / 4) + std::to_string(records[i].label);
  const auto out = split_stratified(records, {0.6, 0.2, 0.2}, true, 8);
  std::map<std::string, std::set<Split>> seen;
  for (const auto& r : out) {
    if (!r.patient.empty()) seen[r.patient].insert(r.split);
  }
  for (const auto& [patient, splits] : seen) CHECK_MESSAGE(splits.size() == 1, patient);
  Manifest m;
  m.records = out;
  CHECK_NOTHROW(m.validate());
}

TEST_CASE("too few records per class cannot be stratified") {
  auto records = balanced_records(20);
  for (std::size_t i = 0; i < records.size(); ++i) records[i].label = i < 2 ? 1 : 0;
  CHECK_THROWS_AS(split_stratified(records, {0.6, 0.2, 0.2}, false, 1), StratificationError);
}

TEST_CASE("synthetic config validation") {
  SyntheticConfig c;
  c.image_size = 16;
  c.radius_min = 7.0;
  c.radius_max = 8.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.radius_max = c.radius_min - 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.fidelity = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("fidelity 1 maps peak on the lesion center") {
  SyntheticConfig c;
  c.image_size = 48;
  c.count = 200;
  c.fidelity = 1.0;
  c.seed = 3;
  const auto corpus = generate_synthetic(c);
  int positives = 0;
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    const auto& lesion = corpus.lesions[i];
    CHECK(corpus.samples[i].label == (lesion.present ? 1 : 0));
    if (!lesion.present) continue;
    ++positives;
    const auto [x, y] = argmax_xy(corpus.samples[i].attn_map);
    CHECK(std::abs(x - lesion.cx) <= 1);
    CHECK(std::abs(y - lesion.cy) <= 1);
  }
  CHECK(positives == 100);
}

TEST_CASE("fidelity 0 maps carry no lesion location") {
  SyntheticConfig c;
  c.image_size = 48;
  c.count = 2000;
  c.fidelity = 0.0;
  c.seed = 5;
  const auto corpus = generate_synthetic(c);
  std::vector<double> lx, ly, mx, my;
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    if (!corpus.lesions[i].present) continue;
    const auto [x, y] = argmax_xy(corpus.samples[i].attn_map);
    lx.push_back(static_cast<double>(corpus.lesions[i].cx));
    ly.push_back(static_cast<double>(corpus.lesions[i].cy));
    mx.push_back(static_cast<double>(x));
    my.push_back(static_cast<double>(y));
  }
  CHECK(std::abs(pearson(lx, mx)) < 0.1);
  CHECK(std::abs(pearson(ly, my)) < 0.1);
}

TEST_CASE("synthetic corpus invariants and determinism") {
  SyntheticConfig c;
  c.image_size = 32;
  c.count = 60;
  c.channels = 3;
  c.images_per_patient = 3;
  c.seed = 11;
  const auto corpus = generate_synthetic(c);
  REQUIRE(corpus.samples.size() == 60);
  for (const auto& s : corpus.samples) {
    CHECK_NOTHROW(s.validate());
    CHECK(s.image.shape() == Shape{1, 3, 32, 32});
  }
  CHECK_NOTHROW(corpus.manifest.validate());

  test::TempDir a("corpus_a"), b("corpus_b");
  write_corpus(corpus, a.path());
  write_corpus(generate_synthetic(c), b.path());
  for (const auto& entry : std::filesystem::recursive_directory_iterator(a.path())) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), a.path());
    CHECK_MESSAGE(read_bytes(entry.path()) == read_bytes(b.path() / rel), rel.string());
  }
  const Manifest m = read_manifest(a / "manifest.csv");
  CHECK(m.records.size() == 60);
  CHECK(test::bitwise_equal(load_tensor(m.resolve(m.records[7].image)), corpus.samples[7].image));
}
