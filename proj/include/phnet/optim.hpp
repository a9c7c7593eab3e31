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

#include <cstdint>
#include <vector>

#include "phnet/models.hpp"
#include "phnet/tensor.hpp"

namespace phnet {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// L2 penalty folded into the gradient before the moment updates.
  double weight_decay = 0.0;

  void validate() const;
};

/// Adam with bias correction. Parameters are shared handles, so step()
/// updates the model in place. A parameter without an accumulated gradient
/// is treated as having a zero gradient.
class Adam {
 public:
  Adam(std::vector<StateEntry> params, AdamConfig config);

  void step();
  void zero_grad();

  std::int64_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<StateEntry>& params() const { return params_; }

  /// Moments as named tensors: "<param>.m", "<param>.v", plus "step".
  StateDict state() const;
  void load_state(const StateDict& state);

 private:
  std::vector<StateEntry> params_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  AdamConfig config_;
  std::int64_t steps_ = 0;
};

}  // namespace phnet
