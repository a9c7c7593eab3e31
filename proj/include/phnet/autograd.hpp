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
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "phnet/tensor.hpp"

namespace phnet {

namespace detail {

using BackwardFn = std::function<void(const TensorImpl& out)>;

struct Node {
  std::uint64_t seq = 0;
  std::string name;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  BackwardFn backward;
};

/// True if grad mode is on and any input requires grad.
bool needs_grad(std::initializer_list<Tensor> inputs);

/// Records `out` as produced by `name` from `inputs`.
void attach(Tensor& out, std::vector<Tensor> inputs, std::string name, BackwardFn fn);

/// Gradient buffer of `impl`, allocated as zeros on first use.
template <class T>
std::span<T> grad_buffer(TensorImpl& impl) {
  if (!impl.has_grad) {
    impl.grad = Storage<T>(static_cast<std::size_t>(impl.shape.numel()), T(0));
    impl.has_grad = true;
  }
  auto& v = std::get<Storage<T>>(impl.grad);
  return {v.data(), v.size()};
}

template <class T>
std::span<const T> grad_of(const TensorImpl& impl) {
  const auto& v = std::get<Storage<T>>(impl.grad);
  return {v.data(), v.size()};
}

template <class T>
std::span<const T> data_of(const TensorImpl& impl) {
  const auto& v = std::get<Storage<T>>(impl.data);
  return {v.data(), v.size()};
}

}  // namespace detail

/// Recorded operations reachable from a root, in topological order (every
/// node's inputs precede it).
class GradTape {
 public:
  struct Entry {
    std::shared_ptr<detail::TensorImpl> output;
    std::shared_ptr<detail::Node> node;
  };

  static GradTape collect(const Tensor& root);

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  /// Runs backward rules in reverse order. The root's grad must be seeded.
  void run_backward() const;

 private:
  std::vector<Entry> entries_;
};

/// Reverse-mode pass from a scalar loss. Grads accumulate additively into
/// every reachable tensor that requires grad.
void backward(const Tensor& loss);

}  // namespace phnet
