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
#include <memory>
#include <new>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "phnet/error.hpp"

namespace phnet {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

const char* dtype_name(DType dtype);

/// Extents of a rank-4 tensor in (batch, channel, height, width) order.
struct Shape {
  std::int64_t n = 1;
  std::int64_t c = 1;
  std::int64_t h = 1;
  std::int64_t w = 1;

  std::int64_t numel() const { return n * c * h * w; }
  std::int64_t plane() const { return h * w; }
  std::array<std::int64_t, 4> dims() const { return {n, c, h, w}; }
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Allocator with 64-byte alignment, so that vectorized kernels see the same
/// alignment (and hence the same rounding) for the same shapes in every run.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t count) { return static_cast<T*>(::operator new(count * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <class T>
using Storage = std::vector<T, AlignedAllocator<T>>;

using Buffer = std::variant<Storage<float>, Storage<double>>;

namespace detail {
struct Node;

struct TensorImpl {
  Shape shape;
  DType dtype = DType::f32;
  Buffer data;
  Buffer grad;
  bool has_grad = false;
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;
};
}  // namespace detail

/// Calls `fn` with a value of the C++ scalar type matching `dtype`.
template <class Fn>
decltype(auto) visit_dtype(DType dtype, Fn&& fn) {
  if (dtype == DType::f32) return fn(float{});
  return fn(double{});
}

template <class T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

/// Dense rank-4 tensor with a single contiguous N,C,H,W buffer.
///
/// A Tensor is a shared handle: copies refer to the same storage, which is
/// what lets parameters be updated in place by an optimizer while the model
/// keeps referring to them. Use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, DType dtype = DType::f32);
  static Tensor full(Shape shape, double value, DType dtype = DType::f32);
  static Tensor from_values(Shape shape, std::span<const double> values,
                            DType dtype = DType::f32);
  static Tensor scalar(double value, DType dtype = DType::f32);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl().shape; }
  DType dtype() const { return impl().dtype; }
  std::int64_t numel() const { return impl().shape.numel(); }

  template <class T>
  std::span<T> data() {
    check_dtype<T>();
    auto& v = std::get<Storage<T>>(impl().data);
    return {v.data(), v.size()};
  }
  template <class T>
  std::span<const T> data() const {
    check_dtype<T>();
    const auto& v = std::get<Storage<T>>(impl().data);
    return {v.data(), v.size()};
  }

  double at(std::int64_t i) const;
  double at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const;
  void set(std::int64_t i, double value);
  void set(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w, double value);
  /// Value of a one-element tensor.
  double item() const;
  std::vector<double> to_vector() const;

  bool requires_grad() const { return impl().requires_grad; }
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const { return impl().grad_fn == nullptr; }

  bool has_grad() const { return impl().has_grad; }
  /// Detached copy of the accumulated gradient.
  Tensor grad() const;
  template <class T>
  std::span<T> grad_data() {
    check_dtype<T>();
    auto& v = std::get<Storage<T>>(impl().grad);
    return {v.data(), v.size()};
  }
  void zero_grad();

  /// Deep copy detached from any graph.
  Tensor clone() const;
  Tensor to(DType dtype) const;
  /// Overwrites the values of this tensor with those of `other` (same shape),
  /// converting dtype if needed. Graph state is untouched.
  void assign(const Tensor& other);

  detail::TensorImpl& impl() const;
  const std::shared_ptr<detail::TensorImpl>& impl_ptr() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  template <class T>
  void check_dtype() const {
    if (impl().dtype != dtype_of<T>()) {
      throw ContractError(std::string("tensor dtype is ") + dtype_name(impl().dtype) +
                          ", accessed as " + dtype_name(dtype_of<T>()));
    }
  }

  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Disables graph recording for its lifetime (evaluation, optimizer steps).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// When enabled every op checks its output for NaN/Inf and throws NumericError.
void set_debug_checks(bool enabled);
bool debug_checks();
void check_finite(const Tensor& t, const std::string& what);

}  // namespace phnet
