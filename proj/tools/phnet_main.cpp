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

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "checks.hpp"
#include "phnet/checkpoint.hpp"
#include "phnet/config.hpp"
#include "phnet/error.hpp"
#include "phnet/image_io.hpp"
#include "phnet/parallel.hpp"
#include "phnet/tensor_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace phnet {
namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;
constexpr int kVerification = 3;

/// Thrown for conditions that are reported already and only need an exit code.
struct ExitCode {
  int code;
};

json read_json_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

void require_empty_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw ConfigError("output directory " + dir.string() + " is not empty (use --force to overwrite)");
  }
  fs::create_directories(dir);
}

std::string millions(std::int64_t count) {
  return std::to_string(std::llround(static_cast<double>(count) / 1e6)) + "M";
}

// ---------------------------------------------------------------------------
// gen-data

struct GenDataArgs {
  fs::path out;
  fs::path config;
  std::optional<std::int64_t> size, count;
  std::optional<std::uint64_t> seed;
  std::optional<double> fidelity, contrast, radius_min, radius_max, positive_fraction;
  std::optional<int> channels, images_per_patient;
  bool force = false;
};

int cmd_gen_data(const GenDataArgs& a) {
  json j = a.config.empty() ? json::object() : read_json_file(a.config);
  if (j.contains("synthetic")) j = j["synthetic"];
  if (a.size) j["image_size"] = *a.size;
  if (a.count) j["count"] = *a.count;
  if (a.seed) j["seed"] = *a.seed;
  if (a.fidelity) j["fidelity"] = *a.fidelity;
  if (a.contrast) j["contrast"] = *a.contrast;
  if (a.radius_min) j["radius_min"] = *a.radius_min;
  if (a.radius_max) j["radius_max"] = *a.radius_max;
  if (a.positive_fraction) j["positive_fraction"] = *a.positive_fraction;
  if (a.channels) j["channels"] = *a.channels;
  if (a.images_per_patient) j["images_per_patient"] = *a.images_per_patient;
  const SyntheticConfig config = synthetic_from_json(j);
  config.validate();
  require_empty_dir(a.out, a.force);

  const SyntheticCorpus corpus = generate_synthetic(config);
  write_corpus(corpus, a.out);
  write_json_file(a.out / "synthetic.json", synthetic_to_json(config));

  std::map<std::pair<int, int>, int> counts;
  for (const auto& r : corpus.manifest.records) ++counts[{static_cast<int>(r.split), r.label}];
  std::printf("wrote %zu samples to %s\n", corpus.samples.size(), a.out.string().c_str());
  std::printf("%-6s %9s %9s\n", "split", "negative", "positive");
  for (int s = 0; s < 3; ++s) {
    std::printf("%-6s %9d %9d\n", split_name(static_cast<Split>(s)), counts[{s, 0}], counts[{s, 1}]);
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// make-maps

struct MakeMapsArgs {
  fs::path manifest;
  fs::path out;
  fs::path producer;
  bool train_producer = false;
  bool zero_map = false;
  std::string format = "pht";
  std::int64_t target_size = 0;
  int epochs = 30;
  double lr = 1e-3;
  int batch_size = 32;
  std::uint64_t seed = 0;
  bool force = false;
};

std::unique_ptr<AttentionPoolNet> train_producer(const Manifest& manifest, const MakeMapsArgs& a) {
  Dataset train_set = make_dataset(load_samples(manifest, Split::train, MapPolicy::zero_map, a.target_size), false);
  Dataset val_set = make_dataset(load_samples(manifest, Split::val, MapPolicy::zero_map, a.target_size), false);
  if (train_set.size() == 0 || val_set.size() == 0) throw ConfigError("training a producer needs train and val records");
  AttentionPoolSpec spec;
  spec.in_channels = static_cast<int>(train_set.inputs.front().shape().c);
  Rng rng = make_rng(a.seed, "init");
  auto producer = std::make_unique<AttentionPoolNet>(spec, rng);
  TrainConfig tc;
  tc.lr = a.lr;
  tc.max_epochs = a.epochs;
  tc.patience = std::min(20, a.epochs);
  tc.batch_size = a.batch_size;
  tc.seed = a.seed;
  TrainHooks hooks;
  hooks.on_epoch = [](const EpochLog& r) {
    std::printf("producer epoch %3d  loss %.4f  val_auc %.4f\n", r.epoch, r.train_loss, r.val_auc);
    std::fflush(stdout);
  };
  const TrainResult result = train(*producer, train_set, val_set, tc, hooks);
  save_checkpoint(a.out / "producer.ckpt",
                  make_checkpoint(*producer, nullptr, {{"best_epoch", result.best_epoch}, {"best_value", result.best_value}}));
  return producer;
}

int cmd_make_maps(const MakeMapsArgs& a) {
  const int sources = (a.producer.empty() ? 0 : 1) + (a.train_producer ? 1 : 0) + (a.zero_map ? 1 : 0);
  if (sources != 1) throw ConfigError("choose exactly one of --producer, --train-producer, --zero-map");
  if (a.format != "pht" && a.format != "png") throw ConfigError("--format must be pht or png");
  const Manifest manifest = read_manifest(a.manifest);
  require_empty_dir(a.out, a.force);
  fs::create_directories(a.out / "maps");

  std::unique_ptr<AttentionPoolNet> producer;
  if (a.train_producer) {
    producer = train_producer(manifest, a);
  } else if (!a.producer.empty()) {
    auto model = restore_model(load_checkpoint(a.producer));
    if (dynamic_cast<AttentionPoolNet*>(model.get()) == nullptr) {
      throw ConfigError(a.producer.string() + " is not an attention-pool checkpoint");
    }
    producer.reset(static_cast<AttentionPoolNet*>(model.release()));
  }

  Manifest updated = manifest;
  updated.base_dir = a.out;
  std::vector<std::string> problems;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const ManifestRecord& r = manifest.records[i];
    ManifestRecord& u = updated.records[i];
    try {
      const Tensor image = load_image(manifest.resolve(r.image));
      const AugmentedSample s = prepare_sample(image, nullptr, r.label, r.id, r.patient, a.target_size);
      const Tensor map = producer ? produce_map(*producer, s.image) : s.attn_map;
      const std::string rel = "maps/" + r.id + "." + a.format;
      if (a.format == "png") {
        save_png_gray(a.out / rel, map);
      } else {
        save_tensor(a.out / rel, map);
      }
      u.image = fs::absolute(manifest.resolve(r.image)).lexically_normal().string();
      u.map = rel;
    } catch (const Error& e) {
      problems.push_back(r.id + ": " + e.what());
    }
  }
  write_manifest(updated, a.out / "manifest.csv");
  if (!problems.empty()) {
    std::fprintf(stderr, "%zu record(s) failed:\n", problems.size());
    for (const auto& p : problems) std::fprintf(stderr, "  %s\n", p.c_str());
    throw ExitCode{kRuntime};
  }
  std::printf("wrote %zu maps to %s\n", manifest.records.size(), (a.out / "maps").string().c_str());
  return kOk;
}

// ---------------------------------------------------------------------------
// train / eval

struct TrainArgs {
  fs::path config;
  std::optional<std::string> output, manifest, map_policy, producer, depth, monitor, dtype;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> target_size, size, count;
  std::optional<int> n, epochs, patience, batch_size, channels;
  std::optional<double> lr, weight_decay, fidelity, contrast;
  bool synthetic = false;
  bool no_augment = false;
  bool force = false;
};

RunConfig build_run_config(const TrainArgs& a) {
  json j = a.config.empty() ? json::object() : read_json_file(a.config);
  auto set = [&](const char* key, const auto& v) {
    if (v) j[key] = *v;
  };
  auto sub = [&](const char* section) -> json& {
    if (!j.contains(section)) j[section] = json::object();
    return j[section];
  };
  set("output", a.output);
  set("seed", a.seed);
  set("map_policy", a.map_policy);
  set("producer", a.producer);
  set("target_size", a.target_size);
  if (a.manifest) {
    j["manifest"] = *a.manifest;
    j.erase("synthetic");
  }
  if (a.synthetic || a.size || a.count || a.fidelity || a.contrast || a.channels) {
    json& s = sub("synthetic");
    if (a.size) s["image_size"] = *a.size;
    if (a.count) s["count"] = *a.count;
    if (a.fidelity) s["fidelity"] = *a.fidelity;
    if (a.contrast) s["contrast"] = *a.contrast;
    if (a.channels) s["channels"] = *a.channels;
    j.erase("manifest");
  }
  if (a.depth || a.n || a.dtype) {
    json& m = sub("model");
    // A new depth or n selects the standard layout for it.
    if (a.depth || a.n) {
      for (const char* k : {"stage_widths", "blocks", "expansion"}) m.erase(k);
    }
    if (a.depth) m["depth"] = *a.depth;
    if (a.n) m["n"] = *a.n;
    if (a.dtype) m["dtype"] = *a.dtype;
  }
  if (a.lr || a.weight_decay || a.epochs || a.patience || a.batch_size || a.monitor || a.no_augment) {
    json& t = sub("train");
    if (a.lr) t["lr"] = *a.lr;
    if (a.weight_decay) t["weight_decay"] = *a.weight_decay;
    if (a.epochs) t["max_epochs"] = *a.epochs;
    if (a.patience) t["patience"] = *a.patience;
    if (a.batch_size) t["batch_size"] = *a.batch_size;
    if (a.monitor) t["monitor"] = *a.monitor;
    if (a.no_augment) t["augment"] = false;
    // --epochs alone caps the inherited patience instead of failing validation.
    if (a.epochs && !a.patience) {
      const int patience = t.value("patience", TrainConfig{}.patience);
      t["patience"] = std::min(patience, *a.epochs);
    }
  }
  RunConfig c = RunConfig::from_json(j);
  if (c.synthetic) {
    c.model.in_channels = c.synthetic->channels + 1;
  } else if (c.manifest && fs::exists(*c.manifest) && !(j.contains("model") && j["model"].contains("in_channels"))) {
    const Manifest m = read_manifest(*c.manifest);
    if (!m.records.empty()) {
      c.model.in_channels = static_cast<int>(load_image(m.resolve(m.records.front().image)).shape().c) + 1;
    }
  }
  c.validate();
  return c;
}

void write_metrics(const MetricsReport& report, const fs::path& dir, const char* label) {
  write_report(report, dir);
  std::printf("%s: auc %.6f  accuracy %.6f  [TN %lld FP %lld; FN %lld TP %lld]\n", label, report.auc, report.accuracy,
              static_cast<long long>(report.confusion[0][0]), static_cast<long long>(report.confusion[0][1]),
              static_cast<long long>(report.confusion[1][0]), static_cast<long long>(report.confusion[1][1]));
}

int cmd_train(const TrainArgs& a) {
  RunConfig config = build_run_config(a);
  require_empty_dir(config.output, a.force);
  RunData data = load_run_data(config);
  if (config.model.in_channels != data.image_channels + 1) {
    config.model.in_channels = data.image_channels + 1;
    config.model.validate();
  }
  write_json_file(config.output / "config.json", config.to_json());

  auto model = build_model(config.model, config.seed);
  std::printf("model %s n=%d: %lld parameters; train %zu, val %zu, test %zu\n", depth_name(config.model.depth),
              config.model.n, static_cast<long long>(count_params(*model)), data.train.size(), data.val.size(),
              data.test.size());
  const fs::path log_path = config.output / "log.csv";
  write_log_header(log_path);
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochLog& r) {
    append_log(log_path, r);
    std::printf("epoch %3d  loss %.5f  val_auc %.5f  val_acc %.5f  %.1fs\n", r.epoch, r.train_loss, r.val_auc,
                r.val_accuracy, r.elapsed_s);
    std::fflush(stdout);
  };
  const TrainResult result = train(*model, data.train, data.val, config.train, hooks);
  const json meta{{"run", config.to_json()},
                  {"best_epoch", result.best_epoch},
                  {"best_value", result.best_value},
                  {"monitor", monitor_name(config.train.monitor)},
                  {"epochs_run", static_cast<int>(result.log.size())}};
  save_checkpoint(config.output / "best.ckpt", make_checkpoint(*model, nullptr, meta));
  std::printf("best epoch %d (%s %.6f)%s\n", result.best_epoch, monitor_name(config.train.monitor), result.best_value,
              result.stopped_early ? ", stopped early" : "");
  if (data.test.size() > 0) write_metrics(evaluate(*model, data.test), config.output / "test", "test");
  return kOk;
}

struct EvalArgs {
  fs::path checkpoint;
  std::string split = "test";
  std::optional<std::string> manifest, map_policy, producer, output;
};

int cmd_eval(const EvalArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  if (!ckpt.meta.contains("run")) throw ConfigError(a.checkpoint.string() + " has no run configuration");
  json run = ckpt.meta["run"];
  if (a.manifest) {
    run["manifest"] = *a.manifest;
    run.erase("synthetic");
  }
  if (a.map_policy) run["map_policy"] = *a.map_policy;
  if (a.producer) run["producer"] = *a.producer;
  RunConfig config = RunConfig::from_json(run);
  config.validate();
  const Split split = parse_split(a.split);
  auto model = restore_model(ckpt);
  const Dataset data = load_split(config, split);
  if (data.size() == 0) throw ConfigError("split " + a.split + " is empty");
  const fs::path out = a.output ? fs::path(*a.output) : a.checkpoint.parent_path() / ("eval_" + a.split);
  write_metrics(evaluate(*model, data), out, a.split.c_str());
  return kOk;
}

// ---------------------------------------------------------------------------
// params / verify

struct ParamsArgs {
  std::string depth = "18";
  int n = 1;
  int in_channels = 2;
  int classes = 2;
  bool table = false;
};

int cmd_params(const ParamsArgs& a) {
  auto row = [](Depth depth, int n, int in_channels, int classes) {
    ModelSpec spec = ModelSpec::standard(depth, n, in_channels, classes);
    spec.validate();
    const auto model = build_model(spec, 0);
    const std::int64_t count = count_params(*model);
    std::printf("%-6s n=%d  %12lld  %s\n", depth_name(depth), n, static_cast<long long>(count), millions(count).c_str());
  };
  if (a.table) {
    // Grayscale + map for depth 18; RGB (n=1, n=3) and RGB + map (n=4) for 50.
    row(Depth::d18, 1, 2, a.classes);
    row(Depth::d18, 2, 2, a.classes);
    row(Depth::d50, 1, 3, a.classes);
    row(Depth::d50, 3, 3, a.classes);
    row(Depth::d50, 4, 4, a.classes);
  } else {
    row(parse_depth(a.depth), a.n, a.in_channels, a.classes);
  }
  return kOk;
}

int cmd_verify(std::uint64_t seed) {
  int failed = 0;
  for (const auto& r : checks::verify_suite(seed)) {
    std::printf("[%s] %s  (measured %.3g, tolerance %.3g)%s%s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.measured,
                r.tolerance, r.detail.empty() ? "" : "  ", r.detail.c_str());
    if (!r.pass) ++failed;
  }
  std::printf("%s\n", failed == 0 ? "all checks passed" : (std::to_string(failed) + " check(s) failed").c_str());
  return failed == 0 ? kOk : kVerification;
}

}  // namespace
}  // namespace phnet

int main(int argc, char** argv) {
  using namespace phnet;
  CLI::App app{"Parameterized hypercomplex networks with attention-map inputs"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (overrides PHNET_THREADS)");

  GenDataArgs gen;
  auto* g = app.add_subcommand("gen-data", "Generate a synthetic lesion corpus");
  g->add_option("-o,--out", gen.out, "Output directory")->required();
  g->add_option("--config", gen.config, "JSON file with synthetic corpus settings");
  g->add_option("--size", gen.size, "Image side length");
  g->add_option("--n", gen.count, "Number of samples");
  g->add_option("--seed", gen.seed, "Root seed");
  g->add_option("--fidelity", gen.fidelity, "Attention-map fidelity in [0,1]");
  g->add_option("--contrast", gen.contrast, "Lesion contrast over the texture");
  g->add_option("--radius-min", gen.radius_min, "Smallest lesion radius");
  g->add_option("--radius-max", gen.radius_max, "Largest lesion radius");
  g->add_option("--positive-fraction", gen.positive_fraction, "Fraction of positive samples");
  g->add_option("--channels", gen.channels, "Image channels (1 or 3)");
  g->add_option("--images-per-patient", gen.images_per_patient, "Group images into patients (0: none)");
  g->add_flag("--force", gen.force, "Write into a non-empty directory");

  MakeMapsArgs mm;
  auto* m = app.add_subcommand("make-maps", "Produce attention maps for a manifest");
  m->add_option("--manifest", mm.manifest, "Input manifest")->required();
  m->add_option("-o,--out", mm.out, "Output directory")->required();
  m->add_option("--producer", mm.producer, "Trained attention-pool checkpoint");
  m->add_flag("--train-producer", mm.train_producer, "Train an attention-pool producer on the train split");
  m->add_flag("--zero-map", mm.zero_map, "Write all-zero maps");
  m->add_option("--format", mm.format, "Map file format: pht or png");
  m->add_option("--target-size", mm.target_size, "Resize images to this side length (0: native)");
  m->add_option("--epochs", mm.epochs, "Producer training epochs");
  m->add_option("--lr", mm.lr, "Producer learning rate");
  m->add_option("--batch-size", mm.batch_size, "Producer batch size");
  m->add_option("--seed", mm.seed, "Root seed");
  m->add_flag("--force", mm.force, "Write into a non-empty directory");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a PHResNet");
  t->add_option("--config", tr.config, "Run configuration (JSON)");
  t->add_option("-o,--output", tr.output, "Output directory");
  t->add_option("--seed", tr.seed, "Root seed");
  t->add_option("--manifest", tr.manifest, "Corpus manifest");
  t->add_flag("--synthetic", tr.synthetic, "Train on a generated corpus");
  t->add_option("--size", tr.size, "Synthetic image side length");
  t->add_option("--count", tr.count, "Synthetic sample count");
  t->add_option("--fidelity", tr.fidelity, "Synthetic map fidelity");
  t->add_option("--contrast", tr.contrast, "Synthetic lesion contrast");
  t->add_option("--channels", tr.channels, "Synthetic image channels");
  t->add_option("--map-policy", tr.map_policy, "from_manifest, attention_pool or zero_map");
  t->add_option("--producer", tr.producer, "Attention-pool checkpoint for map policy attention_pool");
  t->add_option("--target-size", tr.target_size, "Resize images to this side length (0: native)");
  t->add_option("--depth", tr.depth, "18, 50 or mini");
  t->add_option("--n", tr.n, "Hypercomplex dimension");
  t->add_option("--dtype", tr.dtype, "f32 or f64");
  t->add_option("--lr", tr.lr, "Learning rate");
  t->add_option("--weight-decay", tr.weight_decay, "L2 weight decay");
  t->add_option("--epochs", tr.epochs, "Maximum epochs");
  t->add_option("--patience", tr.patience, "Early-stopping patience");
  t->add_option("--batch-size", tr.batch_size, "Mini-batch size");
  t->add_option("--monitor", tr.monitor, "auc or accuracy");
  t->add_flag("--no-augment", tr.no_augment, "Disable flips and rotations");
  t->add_flag("--force", tr.force, "Write into a non-empty directory");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint written by train")->required();
  e->add_option("--split", ev.split, "train, val or test");
  e->add_option("--manifest", ev.manifest, "Evaluate on this manifest instead");
  e->add_option("--map-policy", ev.map_policy, "Override the map policy");
  e->add_option("--producer", ev.producer, "Attention-pool checkpoint");
  e->add_option("-o,--output", ev.output, "Directory for metrics.txt and roc.csv");

  ParamsArgs pa;
  auto* p = app.add_subcommand("params", "Count model parameters");
  p->add_option("--depth", pa.depth, "18, 50 or mini");
  p->add_option("--n", pa.n, "Hypercomplex dimension");
  p->add_option("--in-channels", pa.in_channels, "Input channels (image + map)");
  p->add_option("--classes", pa.classes, "Output classes");
  p->add_flag("--table", pa.table, "Print the reference configurations");

  std::uint64_t verify_seed = 2024;
  auto* v = app.add_subcommand("verify", "Run the algebra, gradient and metric property suites");
  v->add_option("--seed", verify_seed, "Seed for the fuzzed cases");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (threads > 0) set_thread_count(threads);
    if (g->parsed()) return cmd_gen_data(gen);
    if (m->parsed()) return cmd_make_maps(mm);
    if (t->parsed()) return cmd_train(tr);
    if (e->parsed()) return cmd_eval(ev);
    if (p->parsed()) return cmd_params(pa);
    if (v->parsed()) return cmd_verify(verify_seed);
  } catch (const ExitCode& x) {
    return x.code;
  } catch (const ConfigError& x) {
    std::fprintf(stderr, "configuration error: %s\n", x.what());
    return kValidation;
  } catch (const StratificationError& x) {
    std::fprintf(stderr, "configuration error: %s\n", x.what());
    return kValidation;
  } catch (const AlgebraError& x) {
    std::fprintf(stderr, "configuration error: %s\n", x.what());
    return kValidation;
  } catch (const std::exception& x) {
    std::fprintf(stderr, "error: %s\n", x.what());
    return kRuntime;
  }
  return kRuntime;
}
