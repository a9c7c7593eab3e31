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

#include "phnet/hypercomplex.hpp"

#include <cmath>

#include "phnet/autograd.hpp"
#include "phnet/ops.hpp"

namespace phnet {

double Quaternion::norm() const { return std::sqrt(q0 * q0 + q1 * q1 + q2 * q2 + q3 * q3); }

Quaternion hamilton_product(const Quaternion& p, const Quaternion& q) {
  return {
      p.q0 * q.q0 - p.q1 * q.q1 - p.q2 * q.q2 - p.q3 * q.q3,
      p.q0 * q.q1 + p.q1 * q.q0 + p.q2 * q.q3 - p.q3 * q.q2,
      p.q0 * q.q2 - p.q1 * q.q3 + p.q2 * q.q0 + p.q3 * q.q1,
      p.q0 * q.q3 + p.q1 * q.q2 - p.q2 * q.q1 + p.q3 * q.q0,
  };
}

namespace {

Tensor algebra_from(int n, std::span<const double> values, DType dtype) {
  return Tensor::from_values({n, n, n, 1}, values, dtype);
}

// Component index and sign of block (r, t) of the quaternion block weight.
struct BlockEntry {
  int component;
  int sign;
};
constexpr std::array<std::array<BlockEntry, 4>, 4> kQuaternionBlocks = {{
    {{{0, +1}, {1, -1}, {2, -1}, {3, -1}}},
    {{{1, +1}, {0, +1}, {3, -1}, {2, +1}}},
    {{{2, +1}, {3, +1}, {0, +1}, {1, -1}}},
    {{{3, +1}, {2, -1}, {1, +1}, {0, +1}}},
}};

void check_components(std::span<const Tensor> components) {
  if (components.size() != 4) {
    throw AlgebraError("quaternion convolution needs 4 component filters, got " +
                       std::to_string(components.size()));
  }
  for (const auto& w : components) {
    if (w.shape() != components[0].shape()) {
      throw DimensionError("quaternion components differ: " + w.shape().str() + " vs " +
                           components[0].shape().str());
    }
  }
}

}  // namespace

Tensor hamilton_algebra(DType dtype) {
  // clang-format off
  static constexpr double kValues[64] = {
      // A_0: identity
       1,  0,  0,  0,
       0,  1,  0,  0,
       0,  0,  1,  0,
       0,  0,  0,  1,
      // A_1: coefficient pattern of W1
       0, -1,  0,  0,
       1,  0,  0,  0,
       0,  0,  0, -1,
       0,  0,  1,  0,
      // A_2: W2
       0,  0, -1,  0,
       0,  0,  0,  1,
       1,  0,  0,  0,
       0, -1,  0,  0,
      // A_3: W3
       0,  0,  0, -1,
       0,  0, -1,  0,
       0,  1,  0,  0,
       1,  0,  0,  0,
  };
  // clang-format on
  return algebra_from(4, kValues, dtype);
}

Tensor complex_algebra(DType dtype) {
  static constexpr double kValues[8] = {1, 0, 0, 1, 0, -1, 1, 0};
  return algebra_from(2, kValues, dtype);
}

bool has_natural_algebra(int n) { return n == 1 || n == 2 || n == 4; }

Tensor natural_algebra(int n, DType dtype) {
  switch (n) {
    case 1:
      return Tensor::full({1, 1, 1, 1}, 1.0, dtype);
    case 2:
      return complex_algebra(dtype);
    case 4:
      return hamilton_algebra(dtype);
    default:
      throw AlgebraError("no natural algebra for n = " + std::to_string(n));
  }
}

void check_algebra_dims(int n, std::int64_t in_channels, std::int64_t out_channels) {
  if (n <= 0) throw AlgebraError("algebra dimension must be positive, got " + std::to_string(n));
  if (in_channels % n != 0 || out_channels % n != 0) {
    throw AlgebraError("channels (in " + std::to_string(in_channels) + ", out " +
                       std::to_string(out_channels) + ") not divisible by n = " + std::to_string(n));
  }
}

Tensor phc_materialize(const Tensor& algebra, std::span<const Tensor> filters) {
  const auto n = static_cast<std::int64_t>(filters.size());
  if (n == 0) throw AlgebraError("phc_materialize: no filter banks");
  if (algebra.shape() != Shape{n, n, n, 1}) {
    throw AlgebraError("phc_materialize: algebra " + algebra.shape().str() + " for n = " + std::to_string(n));
  }
  const Shape fs = filters[0].shape();
  for (const auto& f : filters) {
    if (f.shape() != fs) throw DimensionError("phc_materialize: filter " + f.shape().str() + " vs " + fs.str());
    if (f.dtype() != algebra.dtype()) throw ContractError("phc_materialize: mixed dtypes");
  }
  const std::int64_t co = fs.n;
  const std::int64_t ci = fs.c;
  const std::int64_t k2 = fs.h * fs.w;
  const std::int64_t block = ci * k2;        // contiguous run of one block row
  const std::int64_t row = n * block;        // one output channel of W
  Tensor out = Tensor::zeros({n * co, n * ci, fs.h, fs.w}, algebra.dtype());

  visit_dtype(algebra.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto a = algebra.data<T>();
    auto w = out.data<T>();
    for (std::int64_t i = 0; i < n; ++i) {
      auto f = filters[static_cast<std::size_t>(i)].data<T>();
      for (std::int64_t r = 0; r < n; ++r) {
        for (std::int64_t s = 0; s < n; ++s) {
          const T coef = a[(i * n + r) * n + s];
          if (coef == T(0)) continue;
          for (std::int64_t o = 0; o < co; ++o) {
            T* dst = w.data() + (r * co + o) * row + s * block;
            const T* src = f.data() + o * block;
            for (std::int64_t e = 0; e < block; ++e) dst[e] += coef * src[e];
          }
        }
      }
    }
  });

  std::vector<Tensor> inputs{algebra};
  inputs.insert(inputs.end(), filters.begin(), filters.end());
  bool any = detail::needs_grad({algebra});
  for (const auto& f : filters) any = any || detail::needs_grad({f});
  if (any) {
    std::vector<std::shared_ptr<detail::TensorImpl>> fimpl;
    for (const auto& f : filters) fimpl.push_back(f.impl_ptr());
    detail::attach(out, inputs, "phc_materialize",
                   [ai = algebra.impl_ptr(), fimpl, n, co, block, row](const detail::TensorImpl& o) {
                     visit_dtype(o.dtype, [&](auto tag) {
                       using T = decltype(tag);
                       auto gw = detail::grad_of<T>(o);
                       auto a = detail::data_of<T>(*ai);
                       T* ga = ai->requires_grad ? detail::grad_buffer<T>(*ai).data() : nullptr;
                       for (std::int64_t i = 0; i < n; ++i) {
                         auto& fi = *fimpl[static_cast<std::size_t>(i)];
                         auto f = detail::data_of<T>(fi);
                         T* gf = fi.requires_grad ? detail::grad_buffer<T>(fi).data() : nullptr;
                         for (std::int64_t r = 0; r < n; ++r) {
                           for (std::int64_t s = 0; s < n; ++s) {
                             const T coef = a[(i * n + r) * n + s];
                             double dot = 0.0;
                             for (std::int64_t oc = 0; oc < co; ++oc) {
                               const T* g = gw.data() + (r * co + oc) * row + s * block;
                               const T* src = f.data() + oc * block;
                               T* dst = gf ? gf + oc * block : nullptr;
                               for (std::int64_t e = 0; e < block; ++e) {
                                 if (dst) dst[e] += coef * g[e];
                                 dot += static_cast<double>(g[e]) * src[e];
                               }
                             }
                             if (ga) ga[(i * n + r) * n + s] += static_cast<T>(dot);
                           }
                         }
                       }
                     });
                   });
  }
  if (debug_checks()) check_finite(out, "phc_materialize");
  return out;
}

Tensor quaternion_block_weight(std::span<const Tensor> components) {
  check_components(components);
  const Shape cs = components[0].shape();
  Tensor out = Tensor::zeros({4 * cs.n, 4 * cs.c, cs.h, cs.w}, components[0].dtype());
  for (int r = 0; r < 4; ++r) {
    for (int t = 0; t < 4; ++t) {
      const auto [comp, sign] = kQuaternionBlocks[r][t];
      const Tensor& w = components[static_cast<std::size_t>(comp)];
      for (std::int64_t o = 0; o < cs.n; ++o)
        for (std::int64_t c = 0; c < cs.c; ++c)
          for (std::int64_t y = 0; y < cs.h; ++y)
            for (std::int64_t x = 0; x < cs.w; ++x)
              out.set(r * cs.n + o, t * cs.c + c, y, x, sign * w.at(o, c, y, x));
    }
  }
  return out;
}

Tensor quaternion_conv2d(const Tensor& input, std::span<const Tensor> components, int stride,
                         int padding) {
  check_components(components);
  if (input.shape().c % 4 != 0) {
    throw AlgebraError("quaternion_conv2d: input channels " + std::to_string(input.shape().c) +
                       " not divisible by 4");
  }
  const std::int64_t c = input.shape().c / 4;
  std::array<Tensor, 4> parts;
  for (int t = 0; t < 4; ++t) parts[static_cast<std::size_t>(t)] = slice_channels(input, t * c, c);
  std::vector<Tensor> rows;
  for (int r = 0; r < 4; ++r) {
    Tensor acc;
    for (int t = 0; t < 4; ++t) {
      const auto [comp, sign] = kQuaternionBlocks[r][t];
      Tensor term = conv2d(parts[static_cast<std::size_t>(t)], components[static_cast<std::size_t>(comp)], {},
                           stride, padding);
      if (!acc.defined()) {
        acc = sign > 0 ? term : scale(term, -1.0);
      } else {
        acc = sign > 0 ? add(acc, term) : sub(acc, term);
      }
    }
    rows.push_back(acc);
  }
  return concat_channels(rows);
}

Tensor quaternion_conv2d_materialized(const Tensor& input, std::span<const Tensor> components,
                                      int stride, int padding) {
  if (input.shape().c % 4 != 0) {
    throw AlgebraError("quaternion_conv2d: input channels " + std::to_string(input.shape().c) +
                       " not divisible by 4");
  }
  return conv2d(input, quaternion_block_weight(components), {}, stride, padding);
}

// ---------------------------------------------------------------------------

PHCLayer PHCLayer::create(int n, std::int64_t in_channels, std::int64_t out_channels, int kernel,
                          PHCOptions options, Rng& rng, DType dtype) {
  check_algebra_dims(n, in_channels, out_channels);
  PHCLayer layer;
  layer.n = n;
  layer.stride = options.stride;
  layer.padding = options.padding;
  layer.algebra_learnable = n > 1;

  // Uniform filters with a He bound from the fan-in of the materialized weight.
  const double fan_in = static_cast<double>(in_channels) * kernel * kernel;
  const double bound = std::sqrt(6.0 / fan_in);
  std::uniform_real_distribution<double> uniform(-bound, bound);
  const Shape fs{out_channels / n, in_channels / n, kernel, kernel};
  for (int i = 0; i < n; ++i) {
    std::vector<double> values(static_cast<std::size_t>(fs.numel()));
    for (auto& v : values) v = uniform(rng);
    layer.filters.push_back(Tensor::from_values(fs, values, dtype).set_requires_grad(true));
  }

  if (n == 1) {
    layer.algebra = natural_algebra(1, dtype);
  } else {
    std::vector<double> values(static_cast<std::size_t>(n * n * n));
    if (has_natural_algebra(n)) {
      values = natural_algebra(n, DType::f64).to_vector();
      std::normal_distribution<double> noise(0.0, 0.01);
      for (auto& v : values) v += noise(rng);
    } else {
      std::normal_distribution<double> normal(0.0, 1.0 / n);
      for (auto& v : values) v = normal(rng);
    }
    layer.algebra = Tensor::from_values({n, n, n, 1}, values, dtype).set_requires_grad(true);
  }

  if (options.bias) {
    layer.bias = Tensor::zeros({out_channels, 1, 1, 1}, dtype).set_requires_grad(true);
  }
  return layer;
}

std::int64_t PHCLayer::in_channels() const { return n * filters.at(0).shape().c; }
std::int64_t PHCLayer::out_channels() const { return n * filters.at(0).shape().n; }
int PHCLayer::kernel_h() const { return static_cast<int>(filters.at(0).shape().h); }
int PHCLayer::kernel_w() const { return static_cast<int>(filters.at(0).shape().w); }

Tensor PHCLayer::materialize() const {
  if (n == 1 && !algebra_learnable) {
    // Multiplying by the constant 1 is exact, so the weight is F_0 itself.
    return filters.at(0);
  }
  return phc_materialize(algebra, filters);
}

Tensor PHCLayer::forward(const Tensor& input) const {
  if (input.shape().c != in_channels()) {
    throw DimensionError("PHC layer expects " + std::to_string(in_channels()) + " input channels, got " +
                         input.shape().str());
  }
  return conv2d(input, materialize(), bias, stride, padding);
}

std::vector<Tensor> PHCLayer::parameters() const {
  std::vector<Tensor> out;
  if (algebra_learnable) out.push_back(algebra);
  out.insert(out.end(), filters.begin(), filters.end());
  if (bias.defined()) out.push_back(bias);
  return out;
}

std::int64_t PHCLayer::param_count() const {
  std::int64_t total = 0;
  for (const auto& p : parameters()) total += p.numel();
  return total;
}

std::int64_t phc_param_count(int n, std::int64_t in_channels, std::int64_t out_channels, int kh,
                             int kw, bool bias) {
  check_algebra_dims(n, in_channels, out_channels);
  const std::int64_t algebra = n > 1 ? static_cast<std::int64_t>(n) * n * n : 0;
  const std::int64_t filters = n * (out_channels / n) * (in_channels / n) * kh * kw;
  return algebra + filters + (bias ? out_channels : 0);
}

}  // namespace phnet
