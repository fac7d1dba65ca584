#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "egovideo/nn/optim.hpp"
#include "egovideo/nn/tensor_io.hpp"
#include "gradcheck.hpp"

using namespace egovideo;
using namespace egovideo::nn;

TEST_CASE("adamw minimizes a quadratic") {
  auto w = parameter(Matrix::Constant(2, 2, 3.0));
  AdamW opt({{"w", w}}, {.weight_decay = 0.0});
  for (int i = 0; i < 500; ++i) {
    backward(sum_all(mul(w, w)));
    opt.step(0.05);
  }
  CHECK(w.value().cwiseAbs().maxCoeff() < 1e-2);
  CHECK(opt.steps() == 500);
}

TEST_CASE("weight decay skips vectors") {
  auto m = parameter(Matrix::Ones(2, 2));
  auto b = parameter(Matrix::Ones(1, 2));
  AdamW opt({{"m", m}, {"b", b}}, {.weight_decay = 0.5});
  backward(scale(sum_all(add(sum_all(m), sum_all(b))), 0.0));
  opt.step(0.1);
  CHECK(m.value()(0, 0) < 1.0);
  CHECK(b.value()(0, 0) == 1.0);
}

TEST_CASE("warmup cosine schedule shape") {
  CHECK(warmup_cosine_lr(0, 10, 100, 1.0) == doctest::Approx(0.1));
  CHECK(warmup_cosine_lr(9, 10, 100, 1.0) == doctest::Approx(1.0));
  CHECK(warmup_cosine_lr(100, 10, 100, 1.0) == doctest::Approx(0.0));
  CHECK(warmup_cosine_lr(55, 10, 100, 1.0) == doctest::Approx(0.5).epsilon(0.05));
  CHECK(step_decay_lr(2, 3e-4, 0.85) == doctest::Approx(3e-4 * 0.85 * 0.85));
}

TEST_CASE("tensor container round trips bit-exactly") {
  Rng rng(3);
  NamedTensors t = {{"a", testing::random_matrix(rng, 3, 2)}, {"b.c", testing::random_matrix(rng, 1, 5)}};
  const auto path = std::filesystem::temp_directory_path() / "egovideo_tensor_rt.egvk";
  save_tensors(path, t);
  auto back = load_tensors(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].first == "a");
  CHECK(back[0].second == t[0].second);
  CHECK(back[1].second == t[1].second);
  std::filesystem::remove(path);
}
