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

#include "phnet/autograd.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_set>

namespace phnet {

namespace detail {

namespace {
std::atomic<std::uint64_t> g_next_seq{1};
}

bool needs_grad(std::initializer_list<Tensor> inputs) {
  if (!grad_enabled()) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor& t) { return t.defined() && t.requires_grad(); });
}

void attach(Tensor& out, std::vector<Tensor> inputs, std::string name, BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->seq = g_next_seq.fetch_add(1);
  node->name = std::move(name);
  for (const auto& t : inputs) {
    if (t.defined()) node->inputs.push_back(t.impl_ptr());
  }
  node->backward = std::move(fn);
  out.impl().grad_fn = std::move(node);
  out.impl().requires_grad = true;
}

}  // namespace detail

GradTape GradTape::collect(const Tensor& root) {
  GradTape tape;
  std::unordered_set<const detail::TensorImpl*> seen;
  std::vector<std::shared_ptr<detail::TensorImpl>> stack{root.impl_ptr()};
  while (!stack.empty()) {
    auto impl = std::move(stack.back());
    stack.pop_back();
    if (!impl->grad_fn || !seen.insert(impl.get()).second) continue;
    tape.entries_.push_back({impl, impl->grad_fn});
    for (const auto& in : impl->grad_fn->inputs) {
      if (in->requires_grad) stack.push_back(in);
    }
  }
  // Sequence numbers are assigned at creation, so ascending order is a valid
  // topological order of the recorded graph.
  std::sort(tape.entries_.begin(), tape.entries_.end(),
            [](const Entry& a, const Entry& b) { return a.node->seq < b.node->seq; });
  return tape;
}

void GradTape::run_backward() const {
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    // Outputs that no consumer touched contribute nothing.
    if (!it->output->has_grad) continue;
    it->node->backward(*it->output);
  }
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + loss.shape().str());
  }
  if (!loss.requires_grad()) throw ContractError("backward() on a tensor that does not require grad");
  visit_dtype(loss.dtype(), [&](auto tag) {
    using T = decltype(tag);
    detail::grad_buffer<T>(loss.impl())[0] += T(1);
  });
  GradTape::collect(loss).run_backward();
}

}  // namespace phnet
