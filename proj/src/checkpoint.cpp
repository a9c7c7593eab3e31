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

#include "phnet/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "phnet/error.hpp"
#include "phnet/tensor_io.hpp"

namespace phnet {

namespace {

constexpr std::array<char, 8> kMagic{'P', 'H', 'C', 'K', '1', '\0', '\0', '\0'};
constexpr std::uint32_t kMaxName = 1u << 16;

template <class U>
void put(std::ostream& os, U v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host assumed");
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class U>
U get(std::istream& is, const std::string& what) {
  U v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw InputError("checkpoint truncated reading " + what);
  return v;
}

void write_section(std::ostream& os, const StateDict& entries) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_tensor(os, e.tensor);
  }
}

StateDict read_section(std::istream& is) {
  const auto count = get<std::uint32_t>(is, "tensor count");
  StateDict out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(is, "name length");
    if (len > kMaxName) throw InputError("checkpoint tensor name is implausibly long");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw InputError("checkpoint truncated reading a tensor name");
    out.push_back({std::move(name), read_tensor(is), true});
  }
  return out;
}

}  // namespace

Checkpoint make_checkpoint(const Classifier& model, const Adam* optimizer, nlohmann::json meta) {
  Checkpoint c;
  c.model_spec = model.spec_json();
  c.meta = std::move(meta);
  for (const auto& e : model.state()) c.tensors.push_back({e.name, e.tensor.clone(), e.trainable});
  if (optimizer != nullptr) {
    for (const auto& e : optimizer->state()) c.optimizer.push_back({e.name, e.tensor.clone(), false});
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot write checkpoint " + path.string());
  os.write(kMagic.data(), kMagic.size());
  const std::string text = nlohmann::json{{"model", ckpt.model_spec}, {"meta", ckpt.meta}}.dump();
  put<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  write_section(os, ckpt.tensors);
  write_section(os, ckpt.optimizer);
  if (!os) throw InputError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw InputError(path.string() + " is not a checkpoint (bad magic)");
  }
  const auto len = get<std::uint64_t>(is, "header length");
  if (len > (1ull << 30)) throw InputError("checkpoint header is implausibly large");
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw InputError("checkpoint truncated in header");
  Checkpoint c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.model_spec = j.at("model");
    c.meta = j.at("meta");
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("checkpoint header is not valid: ") + e.what());
  }
  c.tensors = read_section(is);
  c.optimizer = read_section(is);
  return c;
}

std::unique_ptr<Classifier> restore_model(const Checkpoint& ckpt) {
  auto model = build_classifier(ckpt.model_spec);
  load_state(*model, ckpt.tensors);
  return model;
}

}  // namespace phnet
