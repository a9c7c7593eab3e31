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

#include <span>

#include "phnet/tensor.hpp"

namespace phnet {

enum class Mode { train, eval };

// Elementwise and reductions. Binary ops require identical shapes and dtypes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// Sum of all elements as a [1,1,1,1] tensor.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// While alive, records how close relu and max_pool2d inputs on this thread
/// come to a point where those ops are not differentiable: |x| for relu, the
/// gap between the two largest entries of a window for max pooling (windows
/// whose maximum is <= 0 are skipped). Used to qualify finite-difference
/// evaluation points.
class KinkMonitor {
 public:
  KinkMonitor();
  ~KinkMonitor();
  KinkMonitor(const KinkMonitor&) = delete;
  KinkMonitor& operator=(const KinkMonitor&) = delete;

  double margin() const { return margin_; }
  void observe(double distance);

 private:
  double margin_;
  KinkMonitor* previous_;
};

/// max(0, x); the subgradient at exactly 0 is 0.
Tensor relu(const Tensor& x);

/// 2-D cross-correlation (no kernel flip).
///
/// input [N,Cin,H,W], weight [Cout,Cin,kh,kw], optional bias with Cout
/// elements. Output extents are floor((H + 2*padding - kh) / stride) + 1.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias = {},
              int stride = 1, int padding = 0);

/// Per-channel running statistics, each with C elements and no grad.
struct RunningStats {
  Tensor mean;
  Tensor var;

  static RunningStats init(std::int64_t channels, DType dtype);
};

/// Batch normalization over (N,H,W) per channel. In train mode the running
/// stats are updated with `momentum` using the unbiased batch variance.
Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  RunningStats& stats, Mode mode, double eps = 1e-5, double momentum = 0.1);

/// input viewed as [N, C*H*W]; weight [K,D,1,1]; bias K elements (optional).
/// Output [N,K,1,1].
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias = {});

/// Mean over (H,W): [N,C,H,W] -> [N,C,1,1].
Tensor global_avg_pool(const Tensor& input);

/// Max pooling; padded positions never win.
Tensor max_pool2d(const Tensor& input, int kernel, int stride, int padding = 0);

/// Mean softmax cross-entropy of logits [N,K,1,1] against class indices.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Softmax over the channel axis of [N,K,1,1] logits.
Tensor softmax(const Tensor& logits);

/// Softmax over all spatial positions of a [N,1,H,W] map, per sample.
Tensor spatial_softmax(const Tensor& logits);

/// out[n,c] = sum_p weights[n,0,p] * values[n,c,p]; returns [N,C,1,1].
Tensor attention_pool(const Tensor& weights, const Tensor& values);

/// Copies channels [begin, begin+count).
Tensor slice_channels(const Tensor& input, std::int64_t begin, std::int64_t count);
Tensor concat_channels(std::span<const Tensor> parts);

/// Copy with a new shape of equal element count.
Tensor reshape(const Tensor& input, Shape shape);

}  // namespace phnet
