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

// Property suites shared by `phnet verify` and the acceptance binary.

#include <cstdint>
#include <string>
#include <vector>

namespace phnet::checks {

struct CheckResult {
  std::string name;
  bool pass = false;
  double measured = 0.0;   // worst error, or the measured quantity
  double tolerance = 0.0;
  std::string detail;
};

/// Hamilton product laws and the Hamilton algebra matrices.
std::vector<CheckResult> algebra_laws(std::uint64_t seed);
/// PHC with n = 1 against real convolution, bitwise, over `shapes` shapes.
CheckResult n1_reduction(int shapes, std::uint64_t seed);
/// PHC with frozen Hamilton matrices against quaternion convolution.
CheckResult hamilton_equivalence(int shapes, std::uint64_t seed);
/// 1x1 quaternion convolution against the pointwise Hamilton product.
CheckResult pointwise_quaternion(int trials, std::uint64_t seed);
/// Materialized PHC weight against an explicit Kronecker sum, random algebras.
CheckResult kron_materialization(int trials, std::uint64_t seed);

/// Finite-difference checks (f64, step 1e-5, relative tolerance 1e-4), one
/// result per op family, each over `seeds` seeds.
std::vector<CheckResult> gradient_checks(int seeds, std::uint64_t seed);

/// Trapezoid AUC against the pairwise oracle on fuzzed instances with ties.
CheckResult auc_oracle(int instances, std::uint64_t seed);
/// AUC unchanged under strictly increasing transforms.
CheckResult auc_monotone(int instances, std::uint64_t seed);

/// Everything above with default sizes.
std::vector<CheckResult> verify_suite(std::uint64_t seed = 2024);

}  // namespace phnet::checks
