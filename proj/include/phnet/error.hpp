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

#include <stdexcept>
#include <string>

namespace phnet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents that do not fit together (names both shapes).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Convolution / pooling geometry producing an empty output.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// API misuse, e.g. backward() on a non-scalar.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Channel counts not divisible by the algebra dimension n.
class AlgebraError : public Error {
 public:
  using Error::Error;
};

/// Invalid user input: labels out of range, empty images, bad files.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration (model spec, synthetic corpus, run config).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Metric undefined for the given data (e.g. AUC with one class).
class MetricError : public Error {
 public:
  using Error::Error;
};

/// Not enough records to stratify into the requested splits.
class StratificationError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered in training (loss or gradients).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace phnet
