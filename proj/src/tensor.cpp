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

#include "phnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "phnet/autograd.hpp"

namespace phnet {

namespace {
thread_local bool g_grad_enabled = true;
bool g_debug_checks =
#ifdef NDEBUG
    false;
#else
    true;
#endif

Buffer make_buffer(DType dtype, std::int64_t count, double value) {
  const auto size = static_cast<std::size_t>(count);
  if (dtype == DType::f32) return Storage<float>(size, static_cast<float>(value));
  return Storage<double>(size, value);
}
}  // namespace

const char* dtype_name(DType dtype) { return dtype == DType::f32 ? "f32" : "f64"; }

std::string Shape::str() const {
  std::ostringstream os;
  os << "[" << n << "," << c << "," << h << "," << w << "]";
  return os.str();
}

Tensor Tensor::zeros(Shape shape, DType dtype) { return full(shape, 0.0, dtype); }

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw DimensionError("negative extent in shape " + shape.str());
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = shape;
  impl->dtype = dtype;
  impl->data = make_buffer(dtype, shape.numel(), value);
  return Tensor(std::move(impl));
}

Tensor Tensor::from_values(Shape shape, std::span<const double> values, DType dtype) {
  if (static_cast<std::int64_t>(values.size()) != shape.numel()) {
    throw DimensionError("shape " + shape.str() + " needs " + std::to_string(shape.numel()) +
                         " values, got " + std::to_string(values.size()));
  }
  Tensor t = zeros(shape, dtype);
  visit_dtype(dtype, [&](auto tag) {
    using T = decltype(tag);
    auto d = t.data<T>();
    std::transform(values.begin(), values.end(), d.begin(),
                   [](double v) { return static_cast<T>(v); });
  });
  return t;
}

Tensor Tensor::scalar(double value, DType dtype) { return full({1, 1, 1, 1}, value, dtype); }

detail::TensorImpl& Tensor::impl() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return *impl_;
}

double Tensor::at(std::int64_t i) const {
  return std::visit([i](const auto& v) { return static_cast<double>(v.at(static_cast<std::size_t>(i))); },
                    impl().data);
}

double Tensor::at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
  const Shape& s = shape();
  return at(((n * s.c + c) * s.h + h) * s.w + w);
}

void Tensor::set(std::int64_t i, double value) {
  std::visit(
      [i, value](auto& v) {
        using T = typename std::decay_t<decltype(v)>::value_type;
        v.at(static_cast<std::size_t>(i)) = static_cast<T>(value);
      },
      impl().data);
}

void Tensor::set(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w, double value) {
  const Shape& s = shape();
  set(((n * s.c + c) * s.h + h) * s.w + w, value);
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape().str());
  return at(0);
}

std::vector<double> Tensor::to_vector() const {
  return std::visit([](const auto& v) { return std::vector<double>(v.begin(), v.end()); },
                    impl().data);
}

Tensor& Tensor::set_requires_grad(bool flag) {
  impl().requires_grad = flag;
  return *this;
}

Tensor Tensor::grad() const {
  if (!has_grad()) throw ContractError("tensor has no gradient");
  auto out = std::make_shared<detail::TensorImpl>();
  out->shape = shape();
  out->dtype = dtype();
  out->data = impl().grad;
  return Tensor(std::move(out));
}

void Tensor::zero_grad() {
  impl().has_grad = false;
  impl().grad = Buffer{};
}

Tensor Tensor::clone() const {
  auto out = std::make_shared<detail::TensorImpl>();
  out->shape = shape();
  out->dtype = dtype();
  out->data = impl().data;
  return Tensor(std::move(out));
}

Tensor Tensor::to(DType target) const {
  if (target == dtype()) return clone();
  return from_values(shape(), to_vector(), target);
}

void Tensor::assign(const Tensor& other) {
  if (other.shape() != shape()) {
    throw DimensionError("assign: shape " + other.shape().str() + " into " + shape().str());
  }
  if (other.dtype() == dtype()) {
    impl().data = other.impl().data;
    return;
  }
  const auto values = other.to_vector();
  visit_dtype(dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto d = data<T>();
    std::transform(values.begin(), values.end(), d.begin(),
                   [](double v) { return static_cast<T>(v); });
  });
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

void set_debug_checks(bool enabled) { g_debug_checks = enabled; }
bool debug_checks() { return g_debug_checks; }

void check_finite(const Tensor& t, const std::string& what) {
  const bool ok = std::visit(
      [](const auto& v) {
        return std::all_of(v.begin(), v.end(), [](auto x) { return std::isfinite(x); });
      },
      t.impl().data);
  if (!ok) throw NumericError("non-finite value in output of " + what);
}

}  // namespace phnet
