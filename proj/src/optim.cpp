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

#include "phnet/optim.hpp"

#include <cmath>
#include <map>

#include "phnet/error.hpp"

namespace phnet {

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be > 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("Adam betas must be in [0,1)");
  if (!(eps > 0.0)) throw ConfigError("Adam eps must be > 0");
  if (weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
}

Adam::Adam(std::vector<StateEntry> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  config_.validate();
  for (const auto& p : params_) {
    m_.push_back(Tensor::zeros(p.tensor.shape(), p.tensor.dtype()));
    v_.push_back(Tensor::zeros(p.tensor.shape(), p.tensor.dtype()));
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Adam::step() {
  // Check every gradient before touching any parameter.
  for (auto& p : params_) {
    if (!p.tensor.has_grad()) continue;
    visit_dtype(p.tensor.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto g = p.tensor.grad_data<T>();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (!std::isfinite(static_cast<double>(g[i]))) {
          throw NumericError("non-finite gradient in parameter '" + p.name + "' at element " + std::to_string(i));
        }
      }
    });
  }
  ++steps_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k].tensor;
    visit_dtype(p.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto w = p.data<T>();
      auto m = m_[k].data<T>();
      auto v = v_[k].data<T>();
      const bool has = p.has_grad();
      const T* g = has ? p.grad_data<T>().data() : nullptr;
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = (has ? static_cast<double>(g[i]) : 0.0) + config_.weight_decay * static_cast<double>(w[i]);
        const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * gi;
        const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double update = config_.lr * (mi / c1) / (std::sqrt(vi / c2) + config_.eps);
        w[i] = static_cast<T>(static_cast<double>(w[i]) - update);
      }
    });
  }
}

StateDict Adam::state() const {
  StateDict out;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    out.push_back({params_[k].name + ".m", m_[k], false});
    out.push_back({params_[k].name + ".v", v_[k], false});
  }
  out.push_back({"step", Tensor::scalar(static_cast<double>(steps_), DType::f64), false});
  return out;
}

void Adam::load_state(const StateDict& state) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& e : state) by_name[e.name] = &e.tensor;
  auto fetch = [&](const std::string& name, Tensor& into) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw InputError("optimizer state is missing '" + name + "'");
    if (!(it->second->shape() == into.shape())) {
      throw DimensionError("optimizer state '" + name + "' has shape " + it->second->shape().str() + ", expected " +
                           into.shape().str());
    }
    into.assign(*it->second);
  };
  for (std::size_t k = 0; k < params_.size(); ++k) {
    fetch(params_[k].name + ".m", m_[k]);
    fetch(params_[k].name + ".v", v_[k]);
  }
  auto it = by_name.find("step");
  if (it == by_name.end()) throw InputError("optimizer state is missing 'step'");
  steps_ = static_cast<std::int64_t>(it->second->item());
}

}  // namespace phnet
