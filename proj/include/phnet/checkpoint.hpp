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

#include <filesystem>
#include <memory>

#include <json.hpp>

#include "phnet/models.hpp"
#include "phnet/optim.hpp"

namespace phnet {

/// Model spec, free-form metadata, named model tensors and (optionally) the
/// optimizer state. On disk: "PHCK1\0\0\0", u64 LE length + JSON text, then
/// two sections of (u32 count, [u32 name length, name, PHT1 tensor]...).
struct Checkpoint {
  nlohmann::json model_spec;
  nlohmann::json meta = nlohmann::json::object();
  StateDict tensors;
  StateDict optimizer;
};

Checkpoint make_checkpoint(const Classifier& model, const Adam* optimizer = nullptr,
                           nlohmann::json meta = nlohmann::json::object());
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Builds the model described by the checkpoint and loads its tensors.
std::unique_ptr<Classifier> restore_model(const Checkpoint& ckpt);

}  // namespace phnet
