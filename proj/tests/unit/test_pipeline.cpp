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

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "phnet/checkpoint.hpp"
#include "phnet/config.hpp"
#include "phnet/image_io.hpp"
#include "phnet/tensor_io.hpp"
#include "test_util.hpp"

using namespace phnet;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(PHNET_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Log lines with the trailing elapsed_s column removed.
std::string log_without_time(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string out;
  for (std::string line; std::getline(in, line);) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

}  // namespace

TEST_CASE("run config validation") {
  RunConfig c;
  CHECK_THROWS_AS(c.validate(), ConfigError);  // no data source
  c.synthetic = SyntheticConfig{};
  CHECK_NOTHROW(c.validate());
  c.manifest = "/nonexistent/manifest.csv";
  CHECK_THROWS_AS(c.validate(), ConfigError);  // two sources
  c.manifest.reset();
  c.map_policy = MapPolicy::attention_pool;
  CHECK_THROWS_AS(c.validate(), ConfigError);  // no producer
  c.map_policy = MapPolicy::zero_map;
  c.producer = "p.ckpt";
  CHECK_THROWS_AS(c.validate(), ConfigError);  // producer without its policy
}

TEST_CASE("run config json and root seed") {
  nlohmann::json j{{"seed", 42},
                   {"synthetic", {{"image_size", 32}, {"count", 40}, {"seed", 3}}},
                   {"map_policy", "zero_map"},
                   {"train", {{"lr", 1e-3}, {"seed", 5}, {"max_epochs", 3}, {"patience", 2}}}};
  const RunConfig c = RunConfig::from_json(j);
  CHECK(c.seed == 42);
  CHECK(c.train.seed == 42);
  CHECK(c.synthetic->seed == 42);
  CHECK(c.map_policy == MapPolicy::zero_map);
  const RunConfig back = RunConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK_THROWS_AS(RunConfig::from_json({{"seed", "x"}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::load("/nonexistent.json"), ConfigError);
}

TEST_CASE("zero map policy loads synthetic data with an empty map channel") {
  RunConfig c;
  c.synthetic = SyntheticConfig{};
  c.synthetic->image_size = 24;
  c.synthetic->count = 30;
  c.map_policy = MapPolicy::zero_map;
  const RunData d = load_run_data(c);
  CHECK(d.train.size() + d.val.size() + d.test.size() == 30);
  const Tensor& x = d.train.inputs.front();
  CHECK(x.shape() == Shape{1, 2, 24, 24});
  for (double v : slice_channels(x, 1, 1).to_vector()) CHECK(v == 0.0);
}

TEST_CASE("trained producer maps peak inside the lesion") {
  SyntheticConfig sc;
  sc.image_size = 64;
  sc.count = 512;
  sc.contrast = 3.0;
  sc.fidelity = 1.0;
  sc.seed = 1;
  const SyntheticCorpus corpus = generate_synthetic(sc);
  std::vector<AugmentedSample> tr, va, all;
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    const auto& s = corpus.samples[i];
    AugmentedSample p = prepare_sample(s.image, nullptr, s.label, s.id, "", 0);
    all.push_back(p);
    if (corpus.manifest.records[i].split == Split::train) tr.push_back(p);
    if (corpus.manifest.records[i].split == Split::val) va.push_back(p);
  }
  AttentionPoolSpec spec;
  Rng rng = make_rng(0, "init");
  AttentionPoolNet producer(spec, rng);
  TrainConfig tc;
  tc.lr = 1e-3;
  tc.max_epochs = 30;
  tc.patience = 30;
  tc.batch_size = 32;
  train(producer, make_dataset(tr, false), make_dataset(va, false), tc);

  int positives = 0, inside = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const LesionInfo& lesion = corpus.lesions[i];
    if (!lesion.present) continue;
    ++positives;
    const Tensor map = produce_map(producer, all[i].image);
    const auto v = map.to_vector();
    double lo = 1.0, hi = 0.0;
    for (double x : v) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    CHECK(lo >= 0.0);
    CHECK(hi <= 1.0);
    const auto k = static_cast<std::int64_t>(std::distance(v.begin(), std::max_element(v.begin(), v.end())));
    const double dx = static_cast<double>(k % 64 - lesion.cx), dy = static_cast<double>(k / 64 - lesion.cy);
    if (std::hypot(dx, dy) <= lesion.radius) ++inside;
  }
  MESSAGE("argmax inside the lesion for " << inside << " of " << positives << " positives");
  CHECK(inside >= 0.8 * positives);
}

TEST_CASE("cli end to end") {
  test::TempDir dir("cli");
  const fs::path log = dir / "out.txt";

  REQUIRE(run_cli("gen-data -o " + (dir / "d1").string() + " --size 32 --n 120 --seed 7 --contrast 1.5", log) == 0);
  CHECK(slurp(log).find("train") != std::string::npos);
  REQUIRE(run_cli("gen-data -o " + (dir / "d2").string() + " --size 32 --n 120 --seed 7 --contrast 1.5", log) == 0);
  for (const auto& e : fs::recursive_directory_iterator(dir / "d1")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir / "d1");
    CHECK_MESSAGE(slurp(e.path()) == slurp(dir / "d2" / rel), rel.string());
  }
  CHECK(run_cli("gen-data -o " + (dir / "d1").string() + " --size 32 --n 120", log) == 1);

  // Training from a config file twice gives identical logs.
  const nlohmann::json cfg{{"seed", 3},
                           {"manifest", (dir / "d1" / "manifest.csv").string()},
                           {"model", {{"depth", "mini"}, {"n", 2}, {"in_channels", 2}}},
                           {"train", {{"lr", 1e-3}, {"max_epochs", 3}, {"patience", 3}, {"batch_size", 16}}}};
  std::ofstream(dir / "c.json") << cfg.dump();
  REQUIRE(run_cli("train --config " + (dir / "c.json").string() + " -o " + (dir / "r1").string(), log) == 0);
  REQUIRE(run_cli("train --config " + (dir / "c.json").string() + " -o " + (dir / "r2").string(), log) == 0);
  CHECK(log_without_time(dir / "r1" / "log.csv") == log_without_time(dir / "r2" / "log.csv"));

  // eval on the val split reproduces the best logged monitor value.
  REQUIRE(run_cli("eval --checkpoint " + (dir / "r1" / "best.ckpt").string() + " --split val -o " +
                      (dir / "ev").string(),
                  log) == 0);
  const RunConfig rc = RunConfig::load(dir / "r1" / "config.json");
  auto model = restore_model(load_checkpoint(dir / "r1" / "best.ckpt"));
  const MetricsReport val = evaluate(*model, load_split(rc, Split::val));
  double best = 0.0;
  for (const auto& row : read_log(dir / "r1" / "log.csv")) best = std::max(best, row.val_auc);
  CHECK(val.auc == best);
  CHECK(fs::exists(dir / "ev" / "roc.csv"));

  // Zero maps through make-maps, then training on the emitted manifest.
  REQUIRE(run_cli("make-maps --manifest " + (dir / "d1" / "manifest.csv").string() + " -o " + (dir / "m0").string() +
                      " --zero-map --format png",
                  log) == 0);
  const Manifest m0 = read_manifest(dir / "m0" / "manifest.csv");
  for (const auto& r : m0.records) {
    for (double v : load_image(m0.resolve(r.map)).to_vector()) REQUIRE(v == 0.0);
  }
  CHECK(run_cli("train --manifest " + (dir / "m0" / "manifest.csv").string() + " -o " + (dir / "r3").string() +
                    " --epochs 1 --lr 1e-3",
                log) == 0);

  // A missing image is reported per record with a runtime exit code.
  Manifest broken = read_manifest(dir / "d1" / "manifest.csv");
  broken.records[3].image = "images/missing.pht";
  write_manifest(broken, dir / "d1" / "broken.csv");
  CHECK(run_cli("make-maps --manifest " + (dir / "d1" / "broken.csv").string() + " -o " + (dir / "mb").string() +
                    " --zero-map",
                log) == 2);
  CHECK(slurp(log).find(broken.records[3].id) != std::string::npos);

  // Validation errors exit with 1 before any work.
  CHECK(run_cli("train --manifest " + (dir / "nope.csv").string() + " -o " + (dir / "r4").string(), log) == 1);
  CHECK(!fs::exists(dir / "r4"));
  CHECK(run_cli("train --synthetic --size 32 --map-policy attention_pool -o " + (dir / "r5").string(), log) == 1);
}

TEST_CASE("cli params") {
  test::TempDir dir("cli_params");
  const fs::path log = dir / "out.txt";
  REQUIRE(run_cli("params --depth 18 --n 2", log) == 0);
  CHECK(slurp(log).find("5592674") != std::string::npos);
  REQUIRE(run_cli("params --table", log) == 0);
  const std::string table = slurp(log);
  CHECK(table.find("11174402") != std::string::npos);
  CHECK(table.find("4216578") != std::string::npos);
  CHECK(run_cli("params --depth 18 --n 3", log) == 1);
}
