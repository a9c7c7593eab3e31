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

#include "phnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "phnet/error.hpp"

namespace phnet {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw InputError("metrics: " + std::to_string(scores.size()) + " scores but " + std::to_string(labels.size()) +
                     " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw InputError("metrics: label " + std::to_string(labels[i]) + " is not 0/1");
    if (!std::isfinite(scores[i])) throw MetricError("metrics: non-finite score at index " + std::to_string(i));
  }
}

}  // namespace

RocResult roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  const auto neg = static_cast<std::int64_t>(labels.size()) - pos;
  if (pos == 0 || neg == 0) throw MetricError("AUC is undefined when only one class is present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocResult r;
  r.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  // Integrate in counts and divide once at the end.
  double area2 = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    const std::int64_t tp0 = tp;
    const std::int64_t fp0 = fp;
    for (; i < order.size() && scores[order[i]] == s; ++i) {
      if (labels[order[i]] == 1) {
        ++tp;
      } else {
        ++fp;
      }
    }
    area2 += static_cast<double>((fp - fp0) * (tp + tp0));
    r.points.push_back({static_cast<double>(fp) / static_cast<double>(neg), static_cast<double>(tp) / static_cast<double>(pos), s});
  }
  r.auc = area2 / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
  return r;
}

ConfusionResult confusion_and_accuracy(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_inputs(scores, labels);
  ConfusionResult r;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const int predicted = scores[i] >= threshold ? 1 : 0;
    ++r.confusion[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(predicted)];
  }
  const std::int64_t correct = r.confusion[0][0] + r.confusion[1][1];
  r.accuracy = scores.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(scores.size());
  return r;
}

MetricsReport evaluate_scores(std::span<const double> scores, std::span<const int> labels, double threshold) {
  MetricsReport m;
  const RocResult roc = roc_auc(scores, labels);
  const ConfusionResult cm = confusion_and_accuracy(scores, labels, threshold);
  m.auc = roc.auc;
  m.roc_points = roc.points;
  m.accuracy = cm.accuracy;
  m.confusion = cm.confusion;
  m.count = static_cast<std::int64_t>(scores.size());
  return m;
}

std::string MetricsReport::to_text() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "samples " << count << '\n';
  os << "auc " << auc << '\n';
  os << "accuracy " << accuracy << '\n';
  os << "confusion_tn " << confusion[0][0] << '\n';
  os << "confusion_fp " << confusion[0][1] << '\n';
  os << "confusion_fn " << confusion[1][0] << '\n';
  os << "confusion_tp " << confusion[1][1] << '\n';
  return os.str();
}

void write_report(const MetricsReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "metrics.txt");
    if (!os) throw InputError("cannot write " + (dir / "metrics.txt").string());
    os << report.to_text();
  }
  std::ofstream os(dir / "roc.csv");
  if (!os) throw InputError("cannot write " + (dir / "roc.csv").string());
  os << std::setprecision(17) << "fpr,tpr,threshold\n";
  for (const auto& p : report.roc_points) os << p.fpr << ',' << p.tpr << ',' << p.threshold << '\n';
}

}  // namespace phnet
