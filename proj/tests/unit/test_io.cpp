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


#include <doctest.h>

#include <fstream>
#include <sstream>
#include <vector>

#include "phnet/checkpoint.hpp"
#include "phnet/image_io.hpp"
#include "phnet/optim.hpp"
#include "phnet/tensor_io.hpp"
#include "test_util.hpp"

using namespace phnet;
using phnet::test::randn;

TEST_CASE("PHT1 round trip is bit exact") {
  Rng rng(60);
  test::TempDir dir("pht");
  for (DType dtype : {DType::f32, DType::f64}) {
    const Tensor t = randn({2, 3, 5, 7}, rng, dtype);
    const auto path = dir / (std::string(dtype_name(dtype)) + ".pht");
    save_tensor(path, t);
    CHECK(std::filesystem::file_size(path) == 8 + 2 + 16 + static_cast<std::uintmax_t>(t.numel()) * (dtype == DType::f32 ? 4 : 8));
    const Tensor back = load_tensor(path);
    CHECK(back.dtype() == dtype);
    CHECK(test::bitwise_equal(back, t));
  }
  const Tensor single = randn({1, 3, 6, 4}, rng, DType::f32);
  save_tensor(dir / "single.pht", single);
  CHECK(test::bitwise_equal(load_image(dir / "single.pht"), single));
}

TEST_CASE("PHT1 header layout") {
  std::ostringstream os;
  const std::vector<double> v{1.5, -2.0};
  write_tensor(os, Tensor::from_values({1, 1, 1, 2}, v, DType::f64));
  const std::string bytes = os.str();
  CHECK(bytes.substr(0, 8) == std::string("PHT1\0\0\0\0", 8));
  CHECK(bytes[8] == 1);
  CHECK(bytes[9] == 4);
  CHECK(bytes[10 + 12] == 2);  // W, little-endian
}

TEST_CASE("corrupt PHT1 input is rejected") {
  std::istringstream bad_magic(std::string("PHT2\0\0\0\0", 8));
  CHECK_THROWS_AS(read_tensor(bad_magic), InputError);

  std::ostringstream os;
  write_tensor(os, Tensor::zeros({1, 1, 4, 4}));
  std::istringstream truncated(os.str().substr(0, os.str().size() - 3));
  CHECK_THROWS_AS(read_tensor(truncated), InputError);
  CHECK_THROWS_AS(load_tensor("/nonexistent/x.pht"), InputError);
}

TEST_CASE("PNG maps round trip within one quantization step") {
  Rng rng(61);
  test::TempDir dir("png");
  std::uniform_real_distribution<double> u;
  std::vector<double> v(40 * 30);
  for (auto& x : v) x = u(rng);
  v[0] = 0.0;
  v[1] = 1.0;
  const Tensor map = Tensor::from_values({1, 1, 40, 30}, v);
  save_png_gray(dir / "m.png", map);
  const Tensor back = load_image(dir / "m.png");
  CHECK(back.shape() == map.shape());
  CHECK(test::max_abs_diff(back, map) <= 0.5 / 255.0 + 1e-7);
  CHECK(back.at(0) == 0.0);
  CHECK(back.at(1) == 1.0);
}

TEST_CASE("PGM images in 8 and 16 bits") {
  Rng rng(62);
  test::TempDir dir("pgm");
  std::uniform_real_distribution<double> u;
  std::vector<double> v(9 * 11);
  for (auto& x : v) x = u(rng);
  const Tensor img = Tensor::from_values({1, 1, 9, 11}, v, DType::f64);
  save_pgm(dir / "a.pgm", img, 255);
  save_pgm(dir / "b.pgm", img, 65535);
  CHECK(test::max_abs_diff(load_image(dir / "a.pgm"), img) <= 0.5 / 255.0 + 1e-7);
  CHECK(test::max_abs_diff(load_image(dir / "b.pgm"), img) <= 0.5 / 65535.0 + 1e-7);

  std::ofstream(dir / "c.pgm") << "P2\n# ascii\n3 2\n4\n0 1 2\n3 4 4\n";
  const Tensor ascii = load_image(dir / "c.pgm");
  CHECK(ascii.shape() == Shape{1, 1, 2, 3});
  CHECK(ascii.at(4) == 1.0);
  CHECK(ascii.at(1) == 0.25);
  std::ofstream(dir / "d.txt") << "hello";
  CHECK_THROWS_AS(load_image(dir / "d.txt"), InputError);
}

TEST_CASE("checkpoint round trip is bit exact") {
  test::TempDir dir("ckpt");
  auto model = build_model(ModelSpec::standard(Depth::mini, 2, 2), 3);
  // Move BN running stats and weights away from init.
  Rng rng(63);
  model->forward(randn({4, 2, 32, 32}, rng, DType::f32), Mode::train);
  Adam opt(model->parameters(), AdamConfig{});
  opt.step();

  const Checkpoint ckpt = make_checkpoint(*model, &opt, {{"best_epoch", 7}, {"note", "x"}});
  save_checkpoint(dir / "m.ckpt", ckpt);
  const Checkpoint back = load_checkpoint(dir / "m.ckpt");
  CHECK(back.model_spec == ckpt.model_spec);
  CHECK(back.meta == ckpt.meta);
  REQUIRE(back.tensors.size() == ckpt.tensors.size());
  for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
    CHECK(back.tensors[i].name == ckpt.tensors[i].name);
    CHECK(test::bitwise_equal(back.tensors[i].tensor, ckpt.tensors[i].tensor));
  }
  REQUIRE(back.optimizer.size() == ckpt.optimizer.size());
  for (std::size_t i = 0; i < ckpt.optimizer.size(); ++i) {
    CHECK(test::bitwise_equal(back.optimizer[i].tensor, ckpt.optimizer[i].tensor));
  }

  auto restored = restore_model(back);
  const Tensor x = randn({2, 2, 32, 32}, rng, DType::f32);
  NoGradGuard no_grad;
  CHECK(test::bitwise_equal(restored->forward(x, Mode::eval), model->forward(x, Mode::eval)));

  save_checkpoint(dir / "again.ckpt", back);
  std::ifstream a(dir / "m.ckpt", std::ios::binary), b(dir / "again.ckpt", std::ios::binary);
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  CHECK(sa.str() == sb.str());
}

TEST_CASE("truncated checkpoints are rejected") {
  test::TempDir dir("ckpt_bad");
  auto model = build_model(ModelSpec::standard(Depth::mini, 2, 2), 3);
  save_checkpoint(dir / "m.ckpt", make_checkpoint(*model));
  std::ifstream is(dir / "m.ckpt", std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  const std::string bytes = ss.str();
  std::ofstream(dir / "cut.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  CHECK_THROWS_AS(load_checkpoint(dir / "cut.ckpt"), InputError);
}
