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

#include "phnet/tensor.hpp"

namespace phnet {

/// Reads an image as a [1,C,H,W] f32 tensor. Supported: PHT1 (.pht, values
/// as stored), binary/ASCII PGM with 8- or 16-bit samples and grayscale PNG
/// (8/16-bit); PGM and PNG samples are scaled to [0,1].
Tensor load_image(const std::filesystem::path& path);

/// Writes a [1,1,H,W] tensor with values in [0,1] as 8-bit grayscale PNG.
void save_png_gray(const std::filesystem::path& path, const Tensor& image);
Tensor load_png_gray(const std::filesystem::path& path);

/// 8-bit (maxval 255) or 16-bit (maxval 65535) binary PGM, values in [0,1].
void save_pgm(const std::filesystem::path& path, const Tensor& image, int maxval = 255);
Tensor load_pgm(const std::filesystem::path& path);

}  // namespace phnet
