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

#include "phnet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "phnet/tensor_io.hpp"

namespace phnet {

namespace {

std::string lower_ext(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

void require_gray(const Tensor& image, const char* what) {
  const Shape& s = image.shape();
  if (s.n != 1 || s.c != 1 || s.h <= 0 || s.w <= 0) {
    throw InputError(std::string(what) + ": expected a [1,1,H,W] image, got " + s.str());
  }
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

// Skips whitespace and '#' comments in a PNM header.
int read_pnm_int(std::istream& is) {
  for (;;) {
    const int ch = is.peek();
    if (ch == '#') {
      std::string ignored;
      std::getline(is, ignored);
    } else if (std::isspace(ch)) {
      is.get();
    } else {
      break;
    }
  }
  int value = -1;
  is >> value;
  if (!is || value < 0) throw InputError("PGM: malformed header");
  return value;
}

}  // namespace

Tensor load_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + path.string());
  std::string magic(2, '\0');
  is.read(magic.data(), 2);
  if (magic != "P5" && magic != "P2") throw InputError(path.string() + ": not a PGM file");
  const int width = read_pnm_int(is);
  const int height = read_pnm_int(is);
  const int maxval = read_pnm_int(is);
  if (width <= 0 || height <= 0) throw InputError(path.string() + ": empty image");
  if (maxval <= 0 || maxval > 65535) throw InputError(path.string() + ": bad maxval");
  Tensor out = Tensor::zeros({1, 1, height, width});
  auto d = out.data<float>();
  if (magic == "P2") {
    for (auto& v : d) v = static_cast<float>(read_pnm_int(is)) / static_cast<float>(maxval);
    return out;
  }
  is.get();  // single whitespace after maxval
  const int bytes = maxval < 256 ? 1 : 2;
  std::vector<unsigned char> raw(d.size() * static_cast<std::size_t>(bytes));
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!is) throw InputError(path.string() + ": truncated PGM payload");
  for (std::size_t i = 0; i < d.size(); ++i) {
    const int v = bytes == 1 ? raw[i] : (raw[2 * i] << 8) | raw[2 * i + 1];  // big-endian
    d[i] = static_cast<float>(v) / static_cast<float>(maxval);
  }
  return out;
}

void save_pgm(const std::filesystem::path& path, const Tensor& image, int maxval) {
  require_gray(image, "save_pgm");
  if (maxval != 255 && maxval != 65535) throw InputError("save_pgm: maxval must be 255 or 65535");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  const Shape& s = image.shape();
  os << "P5\n" << s.w << " " << s.h << "\n" << maxval << "\n";
  for (std::int64_t i = 0; i < image.numel(); ++i) {
    const auto v = static_cast<int>(std::lround(std::clamp(image.at(i), 0.0, 1.0) * maxval));
    if (maxval == 255) {
      os.put(static_cast<char>(v));
    } else {
      os.put(static_cast<char>(v >> 8));
      os.put(static_cast<char>(v & 0xff));
    }
  }
}

void save_png_gray(const std::filesystem::path& path, const Tensor& image) {
  require_gray(image, "save_png_gray");
  const Shape& s = image.shape();
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw InputError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw InputError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw InputError("PNG write failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(s.w), static_cast<png_uint_32>(s.h), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(s.w));
  for (std::int64_t y = 0; y < s.h; ++y) {
    for (std::int64_t x = 0; x < s.w; ++x) {
      row[static_cast<std::size_t>(x)] =
          static_cast<png_byte>(std::lround(std::clamp(image.at(y * s.w + x), 0.0, 1.0) * 255.0));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor load_png_gray(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw InputError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InputError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InputError("PNG read failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  if (depth == 16) png_set_swap(png);  // host order for 16-bit samples
  png_read_update_info(png, info);
  const bool wide = png_get_bit_depth(png, info) == 16;
  Tensor out = Tensor::zeros({1, 1, static_cast<std::int64_t>(height), static_cast<std::int64_t>(width)});
  auto d = out.data<float>();
  std::vector<png_byte> row(png_get_rowbytes(png, info));
  for (png_uint_32 y = 0; y < height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (png_uint_32 x = 0; x < width; ++x) {
      float v;
      if (wide) {
        std::uint16_t sample;
        std::memcpy(&sample, row.data() + 2 * x, 2);
        v = static_cast<float>(sample) / 65535.0f;
      } else {
        v = static_cast<float>(row[x]) / 255.0f;
      }
      d[y * width + x] = v;
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (width == 0 || height == 0) throw InputError(path.string() + ": empty image");
  return out;
}

Tensor load_image(const std::filesystem::path& path) {
  const std::string ext = lower_ext(path);
  Tensor t;
  if (ext == ".pgm") {
    t = load_pgm(path);
  } else if (ext == ".png") {
    t = load_png_gray(path);
  } else {
    t = load_tensor(path);
    if (t.shape().n != 1) throw InputError(path.string() + ": expected a single image, got " + t.shape().str());
    if (t.dtype() != DType::f32) t = t.to(DType::f32);
  }
  if (t.numel() == 0) throw InputError(path.string() + ": empty image");
  return t;
}

}  // namespace phnet
