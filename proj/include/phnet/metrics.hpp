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
#include <span>
#include <string>
#include <vector>

namespace phnet {

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // score >= threshold is called positive
};

struct RocResult {
  double auc = 0.0;
  std::vector<RocPoint> points;  // from (0,0) to (1,1)
};

/// ROC curve with one point per distinct score and trapezoidal AUC. Tied
/// scores move together, so the AUC counts ties as one half.
/// Throws MetricError unless both classes are present.
RocResult roc_auc(std::span<const double> scores, std::span<const int> labels);

/// [[TN, FP], [FN, TP]]
using Confusion = std::array<std::array<std::int64_t, 2>, 2>;

struct ConfusionResult {
  Confusion confusion{};
  double accuracy = 0.0;
};

/// Positive call when score >= threshold. Labels must be 0 or 1.
ConfusionResult confusion_and_accuracy(std::span<const double> scores, std::span<const int> labels,
                                       double threshold = 0.5);

struct MetricsReport {
  double auc = 0.0;
  std::vector<RocPoint> roc_points;
  double accuracy = 0.0;
  Confusion confusion{};
  std::int64_t count = 0;

  std::string to_text() const;
};

MetricsReport evaluate_scores(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

/// Writes `dir/metrics.txt` and `dir/roc.csv` (fpr,tpr,threshold).
void write_report(const MetricsReport& report, const std::filesystem::path& dir);

}  // namespace phnet
