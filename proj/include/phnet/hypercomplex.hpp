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
#include <span>
#include <string>
#include <vector>

#include "phnet/rng.hpp"
#include "phnet/tensor.hpp"

namespace phnet {

/// q0 + q1 i + q2 j + q3 k.
struct Quaternion {
  double q0 = 0.0;
  double q1 = 0.0;
  double q2 = 0.0;
  double q3 = 0.0;

  static Quaternion identity() { return {1.0, 0.0, 0.0, 0.0}; }
  double norm() const;
  Quaternion conjugate() const { return {q0, -q1, -q2, -q3}; }

  friend bool operator==(const Quaternion&, const Quaternion&) = default;
};

/// Quaternion multiplication (i*j = k, j*i = -k). Not commutative.
Quaternion hamilton_product(const Quaternion& p, const Quaternion& q);
inline Quaternion operator*(const Quaternion& p, const Quaternion& q) { return hamilton_product(p, q); }

// ---------------------------------------------------------------------------
// Algebra matrices
//
// An algebra for dimension n is stored as a Tensor of shape [n, n, n, 1]:
// element (i, r, s, 0) is entry (r, s) of the i-th n x n matrix A_i.

/// The four fixed 4x4 sign/permutation matrices for which sum_i A_i (x) W_i
/// is the quaternion block weight.
Tensor hamilton_algebra(DType dtype = DType::f32);

/// A_0 = I, A_1 = [[0,-1],[1,0]]: complex multiplication.
Tensor complex_algebra(DType dtype = DType::f32);

/// Real (n=1), complex (n=2) or Hamilton (n=4) algebra.
bool has_natural_algebra(int n);
Tensor natural_algebra(int n, DType dtype = DType::f32);

/// W = sum_{i=0}^{n-1} A_i (x) F_i.
///
/// `algebra` has shape [n,n,n,1]; each of the n `filters` has shape
/// (Cout/n, Cin/n, kh, kw). Entry a_rs of A_i scales F_i into the block at
/// output-channel block r and input-channel block s. The result has shape
/// (Cout, Cin, kh, kw) and is differentiable in both A and F.
Tensor phc_materialize(const Tensor& algebra, std::span<const Tensor> filters);

// ---------------------------------------------------------------------------
// Quaternion convolution

/// Block weight [[W0,-W1,-W2,-W3],[W1,W0,-W3,W2],[W2,W3,W0,-W1],[W3,-W2,W1,W0]]
/// from four component filters of shape (co, c, kh, kw). Not differentiable.
Tensor quaternion_block_weight(std::span<const Tensor> components);

/// Quaternion convolution computed component-wise: output component r is the
/// signed sum of component filters convolved with input components x0..x3
/// (input channels are four consecutive groups). Differentiable.
Tensor quaternion_conv2d(const Tensor& input, std::span<const Tensor> components, int stride = 1,
                         int padding = 0);

/// Same result through conv2d with quaternion_block_weight().
Tensor quaternion_conv2d_materialized(const Tensor& input, std::span<const Tensor> components,
                                      int stride = 1, int padding = 0);

// ---------------------------------------------------------------------------
// Parameterized hypercomplex convolution

struct PHCOptions {
  int stride = 1;
  int padding = 0;
  bool bias = false;
};

/// Convolution whose weight is a learned sum of Kronecker products.
///
/// For n = 1 the algebra is the constant [[1]] and is not a parameter, so the
/// layer is exactly a real convolution with weight F_0.
struct PHCLayer {
  int n = 1;
  Tensor algebra;                // [n,n,n,1]
  std::vector<Tensor> filters;   // n x (Cout/n, Cin/n, kh, kw)
  Tensor bias;                   // Cout elements, optional
  int stride = 1;
  int padding = 0;
  bool algebra_learnable = false;

  static PHCLayer create(int n, std::int64_t in_channels, std::int64_t out_channels, int kernel,
                         PHCOptions options, Rng& rng, DType dtype = DType::f32);

  std::int64_t in_channels() const;
  std::int64_t out_channels() const;
  int kernel_h() const;
  int kernel_w() const;

  Tensor materialize() const;
  Tensor forward(const Tensor& input) const;

  /// Learnable tensors in a fixed order: algebra (if learnable), filters, bias.
  std::vector<Tensor> parameters() const;
  std::int64_t param_count() const;
};

inline Tensor phc_forward(const PHCLayer& layer, const Tensor& input) { return layer.forward(input); }

/// Throws AlgebraError unless both channel counts are divisible by n.
void check_algebra_dims(int n, std::int64_t in_channels, std::int64_t out_channels);

/// n * n^2 (omitted for n = 1) + n * (Cout/n) * (Cin/n) * kh * kw (+ Cout bias).
std::int64_t phc_param_count(int n, std::int64_t in_channels, std::int64_t out_channels, int kh,
                             int kw, bool bias = false);

}  // namespace phnet
