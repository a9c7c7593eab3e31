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


// Acceptance runner: one PASS/FAIL line per criterion.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "checks.hpp"
#include "phnet/checkpoint.hpp"
#include "phnet/data.hpp"
#include "phnet/image_io.hpp"
#include "phnet/tensor_io.hpp"
#include "phnet/train.hpp"

namespace fs = std::filesystem;
using namespace phnet;

namespace {

struct Verdict {
  bool pass = true;
  std::string summary;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

Verdict merge_checks(const std::vector<checks::CheckResult>& results) {
  Verdict v;
  for (const auto& r : results) {
    std::printf("    [%s] %s (measured %.3g, tolerance %.3g)%s%s\n", r.pass ? "pass" : "FAIL", r.name.c_str(),
                r.measured, r.tolerance, r.detail.empty() ? "" : "  ", r.detail.c_str());
    v.pass = v.pass && r.pass;
  }
  return v;
}

// ---------------------------------------------------------------------------
// 1. Parameter counts

Verdict parameter_counts() {
  struct Row {
    const char* name;
    Depth depth;
    int n;
    int in_channels;
    long expected_millions;
  };
  const Row rows[] = {{"ResNet18", Depth::d18, 1, 2, 11},
                      {"PHResNet18 n=2", Depth::d18, 2, 2, 5},
                      {"ResNet50", Depth::d50, 1, 3, 16},
                      {"PHResNet50 n=3", Depth::d50, 3, 3, 5},
                      {"PHResNet50 n=4", Depth::d50, 4, 4, 4}};
  Verdict v;
  int matched = 0;
  for (const Row& r : rows) {
    const auto model = build_model(ModelSpec::standard(r.depth, r.n, r.in_channels), 0);
    const std::int64_t count = count_params(*model);
    const long nearest = std::lround(static_cast<double>(count) / 1e6);
    const long truncated = static_cast<long>(count / 1000000);
    const bool ok = nearest == r.expected_millions;
    matched += ok;
    v.pass = v.pass && ok;
    std::printf("    [%s] %-15s in=%d  %10lld  nearest %ldM  truncated %ldM  expected %ldM\n", ok ? "pass" : "FAIL",
                r.name, r.in_channels, static_cast<long long>(count), nearest, truncated, r.expected_millions);
  }
  v.summary = fmt("%d/5 rows match to the nearest million", matched);
  return v;
}

// ---------------------------------------------------------------------------
// 2-4. Property suites from the shared check library

Verdict algebra(std::uint64_t seed) {
  const auto t0 = Clock::now();
  Verdict v = merge_checks({checks::n1_reduction(50, seed), checks::hamilton_equivalence(30, seed + 1),
                            checks::pointwise_quaternion(20, seed + 2)});
  const double s = seconds_since(t0);
  v.pass = v.pass && s < 60.0;
  v.summary = fmt("n=1 bitwise on 50 shapes, Hamilton and pointwise to 1e-12, %.1fs (limit 60s)", s);
  return v;
}

Verdict gradients(std::uint64_t seed) {
  const auto t0 = Clock::now();
  Verdict v = merge_checks(checks::gradient_checks(20, seed));
  const double s = seconds_since(t0);
  v.pass = v.pass && s < 300.0;
  v.summary = fmt("6 families x 20 seeds at step 1e-5, rel tol 1e-4, %.1fs (limit 300s)", s);
  return v;
}

Verdict auc(std::uint64_t seed) {
  Verdict v = merge_checks({checks::auc_oracle(1000, seed), checks::auc_monotone(1000, seed + 1)});
  v.summary = "1000 fuzzed instances each, tolerance 1e-12";
  return v;
}

// ---------------------------------------------------------------------------
// 5. Conditioning effect on the synthetic corpus

double run_condition(const SyntheticCorpus& corpus, bool zero_map, std::uint64_t seed) {
  std::vector<AugmentedSample> parts[3];
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    const AugmentedSample& raw = corpus.samples[i];
    parts[static_cast<int>(corpus.manifest.records[i].split)].push_back(
        prepare_sample(raw.image, zero_map ? nullptr : &raw.attn_map, raw.label, raw.id, "", 0));
  }
  auto model = build_model(ModelSpec::standard(Depth::mini, 2, 2), seed);
  TrainConfig tc;
  tc.lr = 1e-3;
  tc.weight_decay = 5e-4;
  tc.max_epochs = 25;
  tc.patience = 20;
  tc.batch_size = 32;
  tc.seed = seed;
  train(*model, make_dataset(parts[0]), make_dataset(parts[1]), tc);
  return evaluate(*model, make_dataset(parts[2])).auc;
}

Verdict conditioning() {
  const auto t0 = Clock::now();
  const std::uint64_t seeds[] = {0, 1, 2};
  auto corpus_for = [](double fidelity, std::uint64_t seed) {
    SyntheticConfig sc;
    sc.image_size = 64;
    sc.count = 2048;
    sc.contrast = 1.5;
    sc.fidelity = fidelity;
    sc.seed = 100 + seed;
    return generate_synthetic(sc);
  };
  double am9 = 0.0, zero = 0.0, am0 = 0.0;
  for (std::uint64_t s : seeds) {
    // The images do not depend on fidelity, so the zero-map run is shared.
    const SyntheticCorpus c9 = corpus_for(0.9, s);
    const double a = run_condition(c9, false, s);
    const double z = run_condition(c9, true, s);
    const double a0 = run_condition(corpus_for(0.0, s), false, s);
    std::printf("    seed %llu: AM(fidelity 0.9) %.4f  zero_map %.4f  AM(fidelity 0) %.4f\n",
                static_cast<unsigned long long>(s), a, z, a0);
    std::fflush(stdout);
    am9 += a / 3.0;
    zero += z / 3.0;
    am0 += a0 / 3.0;
  }
  const double s = seconds_since(t0);
  const bool gap_ok = am9 - zero >= 0.05;
  const bool level_ok = am9 >= 0.90;
  const bool null_ok = std::abs(am0 - zero) <= 0.03;
  Verdict v;
  v.pass = gap_ok && level_ok && null_ok && s < 1800.0;
  v.summary = fmt("mean test AUC AM %.4f vs zero_map %.4f (gap %+.4f, need >= 0.05; AM needs >= 0.90); "
                  "fidelity 0 gap %+.4f (need within 0.03); %.0fs (limit 1800s)",
                  am9, zero, am9 - zero, am0 - zero, s);
  return v;
}

// ---------------------------------------------------------------------------
// 6. Training recipe

Dataset tiny_dataset(int count, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Dataset d;
  for (int i = 0; i < count; ++i) {
    std::vector<double> v(2 * 8 * 8);
    for (auto& x : v) x = noise(rng) + (i % 2 ? 0.5 : -0.5);
    d.inputs.push_back(Tensor::from_values({1, 2, 8, 8}, v));
    d.labels.push_back(i % 2);
    d.ids.push_back("t" + std::to_string(seed) + "_" + std::to_string(i));
  }
  return d;
}

// Independent statement of the rule: stop after `patience` epochs in a row
// without a strict improvement, or at max_epochs.
std::pair<int, int> expected_stop(const std::vector<double>& seq, int patience, int max_epochs) {
  double best = -INFINITY;
  int best_epoch = 0, since = 0;
  for (int e = 1; e <= max_epochs; ++e) {
    const double x = seq[static_cast<std::size_t>(e - 1)];
    if (x > best) {
      best = x;
      best_epoch = e;
      since = 0;
    } else if (++since == patience) {
      return {e, best_epoch};
    }
  }
  return {max_epochs, best_epoch};
}

Verdict recipe(std::uint64_t seed) {
  Verdict v;
  const Dataset tr = tiny_dataset(8, 1), va = tiny_dataset(4, 2);
  TrainConfig tc;
  tc.lr = 1e-3;
  tc.batch_size = 4;
  tc.seed = seed;
  tc.patience = 20;
  tc.max_epochs = 100;

  std::vector<std::vector<double>> sequences;
  std::vector<double> rising(100), plateau(100, 0.7), ties(100, 0.5), late(100, 0.6);
  for (int i = 0; i < 100; ++i) rising[static_cast<std::size_t>(i)] = 0.5 + i * 0.004;
  for (int i = 0; i < 5; ++i) plateau[static_cast<std::size_t>(i)] = 0.5 + i * 0.05;  // best at epoch 5
  late[19] = 0.61;  // an improvement exactly at the patience edge restarts the count
  late[39] = 0.62;
  sequences = {rising, plateau, ties, late};
  Rng rng(seed);
  std::uniform_int_distribution<int> level(0, 30);
  for (int k = 0; k < 40; ++k) {
    std::vector<double> s(100);
    for (auto& x : s) x = level(rng) / 30.0;  // coarse levels, many ties
    sequences.push_back(s);
  }

  int stop_ok = 0, contract_ok = 0;
  for (const auto& seq : sequences) {
    auto model = build_model(ModelSpec::standard(Depth::mini, 2, 2), seed);
    std::vector<StateDict> snapshots;
    TrainHooks hooks;
    hooks.override_validation = [&](int epoch) {
      snapshots.push_back(snapshot_state(*model));
      return std::pair<double, double>{seq[static_cast<std::size_t>(epoch - 1)], 0.0};
    };
    const TrainResult r = train(*model, tr, va, tc, hooks);
    const auto [stop, best] = expected_stop(seq, tc.patience, tc.max_epochs);
    if (static_cast<int>(r.log.size()) == stop && r.best_epoch == best) ++stop_ok;

    bool contract = r.best_value == seq[static_cast<std::size_t>(best - 1)];
    for (int e = 1; e < r.best_epoch; ++e) contract = contract && r.best_value >= seq[static_cast<std::size_t>(e - 1)];
    const StateDict now = model->state();
    const StateDict& at_best = snapshots[static_cast<std::size_t>(r.best_epoch - 1)];
    for (std::size_t i = 0; i < now.size(); ++i) {
      contract = contract && now[i].tensor.to_vector() == at_best[i].tensor.to_vector();
    }
    if (contract) ++contract_ok;
  }
  const int total = static_cast<int>(sequences.size());
  std::printf("    [%s] stop epoch and best epoch match the rule on %d/%d scripted sequences\n",
              stop_ok == total ? "pass" : "FAIL", stop_ok, total);
  std::printf("    [%s] returned state is the best-epoch snapshot on %d/%d\n", contract_ok == total ? "pass" : "FAIL",
              contract_ok, total);

  // Fixed-seed runs produce identical logs apart from wall-clock time.
  const fs::path dir = fs::temp_directory_path() / fmt("phnet_accept_logs_%llu", static_cast<unsigned long long>(seed));
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto logged_run = [&](const std::string& name) {
    const fs::path path = dir / name;
    write_log_header(path);
    auto model = build_model(ModelSpec::standard(Depth::mini, 2, 2), seed);
    TrainConfig c = tc;
    c.max_epochs = 6;
    c.patience = 6;
    TrainHooks hooks;
    hooks.on_epoch = [&](const EpochLog& row) { append_log(path, row); };
    train(*model, tr, va, c, hooks);
    std::ifstream is(path);
    std::string out;
    for (std::string line; std::getline(is, line);) out += line.substr(0, line.rfind(',')) + "\n";
    return out;
  };
  const bool logs_ok = logged_run("a.csv") == logged_run("b.csv");
  fs::remove_all(dir);
  std::printf("    [%s] two fixed-seed runs give identical logs (elapsed_s excluded)\n", logs_ok ? "pass" : "FAIL");

  v.pass = stop_ok == total && contract_ok == total && logs_ok;
  v.summary = fmt("%d scripted sequences at patience 20, best-checkpoint contract, log identity", total);
  return v;
}

// ---------------------------------------------------------------------------
// 7. Registration and split invariants

std::pair<std::int64_t, std::int64_t> peak(const Tensor& x, int channel) {
  const Shape& s = x.shape();
  double best = -INFINITY;
  std::pair<std::int64_t, std::int64_t> at{-1, -1};
  for (std::int64_t y = 0; y < s.h; ++y) {
    for (std::int64_t c = 0; c < s.w; ++c) {
      if (x.at(0, channel, y, c) > best) {
        best = x.at(0, channel, y, c);
        at = {c, y};
      }
    }
  }
  return at;
}

Verdict data_pipeline(std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<int> side(16, 64);
  std::uniform_int_distribution<int> channels(0, 1);
  double worst = 0.0;
  int registered = 0;
  const int draws = 500;
  for (int k = 0; k < draws; ++k) {
    const std::int64_t h = side(rng), w = side(rng);
    const std::int64_t c_img = channels(rng) ? 3 : 1;
    // Keep the delta far enough from the border to survive any rotation.
    std::uniform_int_distribution<std::int64_t> py(h / 4, h - 1 - h / 4), px(w / 4, w - 1 - w / 4);
    const std::int64_t y0 = py(rng), x0 = px(rng);
    Tensor x = Tensor::zeros({1, c_img + 1, h, w}, DType::f64);
    for (std::int64_t c = 0; c <= c_img; ++c) x.set(0, c, y0, x0, 1.0);
    const GeometricTransform t = GeometricTransform::draw(rng);
    const Tensor out = apply_transform(x, t);
    const auto [ex, ey] = transform_point(t, static_cast<double>(x0), static_cast<double>(y0), h, w);
    const auto map_peak = peak(out, static_cast<int>(c_img));
    bool ok = true;
    for (std::int64_t c = 0; c <= c_img; ++c) {
      const auto p = peak(out, static_cast<int>(c));
      const double d = std::max(std::abs(static_cast<double>(p.first) - ex), std::abs(static_cast<double>(p.second) - ey));
      worst = std::max(worst, d);
      ok = ok && d <= 1.0 && p == map_peak;
    }
    registered += ok;
  }
  std::printf("    [%s] %d/%d transforms keep image and map peaks together, worst displacement %.3f px\n",
              registered == draws ? "pass" : "FAIL", registered, draws, worst);

  // Stratified (record-wise) and patient-wise split invariants.
  std::uniform_int_distribution<int> count(20, 400);
  std::uniform_real_distribution<double> frac(0.2, 0.8);
  std::uniform_int_distribution<int> per_patient(1, 5);
  int strat_ok = 0, patient_ok = 0, trials = 0;
  for (int k = 0; k < 200; ++k) {
    const int n = count(rng);
    const double pos_frac = frac(rng);
    std::vector<ManifestRecord> records;
    for (int i = 0; i < n; ++i) {
      ManifestRecord r;
      r.id = std::to_string(i);
      r.label = i < static_cast<int>(pos_frac * n) ? 1 : 0;
      records.push_back(r);
    }
    int positives = 0;
    for (const auto& r : records) positives += r.label;
    // At least three patients per class even at five images each.
    if (positives < 15 || n - positives < 15) continue;
    ++trials;

    const auto split = split_stratified(records, {0.6, 0.2, 0.2}, false, seed + static_cast<std::uint64_t>(k));
    const double global = static_cast<double>(positives) / n;
    bool ok = true;
    for (int s = 0; s < 3; ++s) {
      int size = 0, pos = 0;
      for (const auto& r : split) {
        if (static_cast<int>(r.split) == s) {
          ++size;
          pos += r.label;
        }
      }
      ok = ok && size > 0 && std::abs(static_cast<double>(pos) / size - global) <= 1.0 / size + 1e-12;
    }
    strat_ok += ok;

    // Same records grouped into single-label patients of 1-5 images.
    int next = 0;
    for (std::size_t i = 0; i < records.size();) {
      const int group = per_patient(rng);
      const int label = records[i].label;
      const std::string patient = "p" + std::to_string(next++);
      for (int g = 0; g < group && i < records.size() && records[i].label == label; ++g, ++i) {
        records[i].patient = patient;
      }
    }
    const auto by_patient = split_stratified(records, {0.6, 0.2, 0.2}, true, seed + static_cast<std::uint64_t>(k));
    std::map<std::string, std::set<Split>> seen;
    for (const auto& r : by_patient) seen[r.patient].insert(r.split);
    bool disjoint = true;
    for (const auto& [p, splits] : seen) disjoint = disjoint && splits.size() == 1;
    patient_ok += disjoint;
  }
  std::printf("    [%s] class-fraction bound holds on %d/%d stratified splits\n", strat_ok == trials ? "pass" : "FAIL",
              strat_ok, trials);
  std::printf("    [%s] patient sets disjoint across splits on %d/%d patient-wise splits\n",
              patient_ok == trials ? "pass" : "FAIL", patient_ok, trials);

  Verdict v;
  v.pass = registered == draws && strat_ok == trials && patient_ok == trials;
  v.summary = fmt("500 transforms (worst %.3f px, limit 1), %d split trials", worst, trials);
  return v;
}

// ---------------------------------------------------------------------------
// 8. Format round trips

std::string file_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Verdict round_trips(std::uint64_t seed) {
  const fs::path dir = fs::temp_directory_path() / fmt("phnet_accept_io_%llu", static_cast<unsigned long long>(seed));
  fs::remove_all(dir);
  fs::create_directories(dir);
  Rng rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> ext(1, 9);

  int pht_ok = 0;
  const int pht_trials = 100;
  for (int k = 0; k < pht_trials; ++k) {
    const Shape s{ext(rng), ext(rng), ext(rng), ext(rng)};
    std::vector<double> v(static_cast<std::size_t>(s.numel()));
    for (auto& x : v) x = normal(rng) * std::pow(10.0, ext(rng) - 5);
    const Tensor t = Tensor::from_values(s, v, k % 2 ? DType::f64 : DType::f32);
    save_tensor(dir / "t.pht", t);
    const Tensor back = load_tensor(dir / "t.pht");
    pht_ok += back.shape() == t.shape() && back.dtype() == t.dtype() && back.to_vector() == t.to_vector();
  }

  auto model = build_model(ModelSpec::standard(Depth::mini, 2, 2), seed);
  std::vector<double> xv(4 * 2 * 16 * 16);
  for (auto& x : xv) x = normal(rng);
  model->forward(Tensor::from_values({4, 2, 16, 16}, xv), Mode::train);
  Adam opt(model->parameters(), AdamConfig{});
  opt.step();
  const Checkpoint ckpt = make_checkpoint(*model, &opt, {{"best_epoch", 3}});
  save_checkpoint(dir / "m.ckpt", ckpt);
  const Checkpoint back = load_checkpoint(dir / "m.ckpt");
  bool ckpt_ok = back.model_spec == ckpt.model_spec && back.meta == ckpt.meta &&
                 back.tensors.size() == ckpt.tensors.size() && back.optimizer.size() == ckpt.optimizer.size();
  for (std::size_t i = 0; ckpt_ok && i < ckpt.tensors.size(); ++i) {
    ckpt_ok = back.tensors[i].name == ckpt.tensors[i].name &&
              back.tensors[i].tensor.to_vector() == ckpt.tensors[i].tensor.to_vector();
  }
  for (std::size_t i = 0; ckpt_ok && i < ckpt.optimizer.size(); ++i) {
    ckpt_ok = back.optimizer[i].tensor.to_vector() == ckpt.optimizer[i].tensor.to_vector();
  }
  save_checkpoint(dir / "again.ckpt", back);
  ckpt_ok = ckpt_ok && file_bytes(dir / "m.ckpt") == file_bytes(dir / "again.ckpt");

  SyntheticConfig sc;
  sc.image_size = 16;
  sc.count = 50;
  sc.images_per_patient = 2;
  const SyntheticCorpus corpus = generate_synthetic(sc);
  write_manifest(corpus.manifest, dir / "manifest.csv");
  const Manifest m = read_manifest(dir / "manifest.csv");
  bool manifest_ok = m.records.size() == corpus.manifest.records.size();
  for (std::size_t i = 0; manifest_ok && i < m.records.size(); ++i) {
    const auto& a = m.records[i];
    const auto& b = corpus.manifest.records[i];
    manifest_ok = a.id == b.id && a.image == b.image && a.map == b.map && a.label == b.label &&
                  a.patient == b.patient && a.split == b.split;
  }
  write_manifest(m, dir / "manifest2.csv");
  manifest_ok = manifest_ok && file_bytes(dir / "manifest.csv") == file_bytes(dir / "manifest2.csv");

  double png_worst = 0.0;
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    const Tensor& map = corpus.samples[i].attn_map;
    save_png_gray(dir / "m.png", map);
    const auto a = load_image(dir / "m.png").to_vector();
    const auto b = map.to_vector();
    for (std::size_t k = 0; k < a.size(); ++k) png_worst = std::max(png_worst, std::abs(a[k] - b[k]));
  }
  fs::remove_all(dir);
  const bool png_ok = png_worst <= 1.0 / 255.0;

  std::printf("    [%s] PHT1 bit-exact on %d/%d fuzzed tensors (f32 and f64)\n", pht_ok == pht_trials ? "pass" : "FAIL",
              pht_ok, pht_trials);
  std::printf("    [%s] checkpoint tensors, optimizer state and metadata bit-exact\n", ckpt_ok ? "pass" : "FAIL");
  std::printf("    [%s] manifest fields and bytes preserved\n", manifest_ok ? "pass" : "FAIL");
  std::printf("    [%s] PNG maps within %.6f (limit %.6f)\n", png_ok ? "pass" : "FAIL", png_worst, 1.0 / 255.0);
  Verdict v;
  v.pass = pht_ok == pht_trials && ckpt_ok && manifest_ok && png_ok;
  v.summary = fmt("PHT1, checkpoint, manifest exact; PNG worst %.6f", png_worst);
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::uint64_t seed = 2024;
  app.add_option("--only", only, "Run only these criteria (1-8)");
  app.add_option("--seed", seed, "Seed for the property checks");
  CLI11_PARSE(app, argc, argv);

  struct Criterion {
    int id;
    const char* title;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "parameter counts", parameter_counts},
      {2, "algebra equivalences", [&] { return algebra(seed); }},
      {3, "gradient correctness", [&] { return gradients(seed); }},
      {4, "AUC oracle equivalence", [&] { return auc(seed); }},
      {5, "attention-map conditioning effect", conditioning},
      {6, "training recipe", [&] { return recipe(seed); }},
      {7, "data-pipeline registration and splits", [&] { return data_pipeline(seed); }},
      {8, "format round trips", [&] { return round_trips(seed); }},
  };

  std::vector<std::string> lines;
  bool all = true;
  for (const Criterion& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    std::printf("criterion %d: %s\n", c.id, c.title);
    std::fflush(stdout);
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    all = all && v.pass;
    lines.push_back(fmt("%s criterion %d (%s): %s [%.1fs]", v.pass ? "PASS" : "FAIL", c.id, c.title,
                        v.summary.c_str(), seconds_since(t0)));
    std::printf("%s\n\n", lines.back().c_str());
    std::fflush(stdout);
  }
  std::printf("summary\n");
  for (const auto& l : lines) std::printf("%s\n", l.c_str());
  return all ? 0 : 1;
}
