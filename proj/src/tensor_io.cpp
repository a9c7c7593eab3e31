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

#include "phnet/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace phnet {

namespace {

constexpr std::array<char, 8> kMagic = {'P', 'H', 'T', '1', '\0', '\0', '\0', '\0'};

template <class U>
void put_le(std::ostream& os, U value) {
  std::array<char, sizeof(U)> bytes;
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
  os.write(bytes.data(), bytes.size());
}

template <class U>
U get_le(std::istream& is) {
  std::array<unsigned char, sizeof(U)> bytes{};
  is.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!is) throw InputError("PHT1: truncated header");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

template <class T, class U>
void write_payload(std::ostream& os, std::span<const T> values) {
  for (T v : values) put_le<U>(os, std::bit_cast<U>(v));
}

template <class T, class U>
void read_payload(std::istream& is, std::span<T> values) {
  std::vector<unsigned char> raw(values.size() * sizeof(U));
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!is) throw InputError("PHT1: truncated payload");
  for (std::size_t i = 0; i < values.size(); ++i) {
    U bits = 0;
    for (std::size_t b = 0; b < sizeof(U); ++b) bits |= static_cast<U>(raw[i * sizeof(U) + b]) << (8 * b);
    values[i] = std::bit_cast<T>(bits);
  }
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.dtype()));
  put_le<std::uint8_t>(os, 4);
  for (std::int64_t d : t.shape().dims()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw DimensionError("PHT1: extent exceeds u32");
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
  }
  if (t.dtype() == DType::f32) {
    write_payload<float, std::uint32_t>(os, t.data<float>());
  } else {
    write_payload<double, std::uint64_t>(os, t.data<double>());
  }
  if (!os) throw InputError("PHT1: write failed");
}

Tensor read_tensor(std::istream& is) {
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) throw InputError("PHT1: bad magic");
  const auto tag = get_le<std::uint8_t>(is);
  const auto rank = get_le<std::uint8_t>(is);
  if (tag > 1) throw InputError("PHT1: unknown dtype tag " + std::to_string(tag));
  if (rank != 4) throw InputError("PHT1: unsupported rank " + std::to_string(rank));
  Shape s;
  s.n = get_le<std::uint32_t>(is);
  s.c = get_le<std::uint32_t>(is);
  s.h = get_le<std::uint32_t>(is);
  s.w = get_le<std::uint32_t>(is);
  Tensor t = Tensor::zeros(s, static_cast<DType>(tag));
  if (t.dtype() == DType::f32) {
    read_payload<float, std::uint32_t>(is, t.data<float>());
  } else {
    read_payload<double, std::uint64_t>(is, t.data<double>());
  }
  return t;
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  write_tensor(os, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + path.string());
  return read_tensor(is);
}

}  // namespace phnet
