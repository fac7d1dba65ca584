#include <doctest.h>

#include "egovideo/common/rng.hpp"
#include "egovideo/metrics/metrics.hpp"
#include "oracles.hpp"

using namespace egovideo;
using egovideo::metrics::tiou;

namespace {

TemporalSegment seg(double s, double e) { return {s, e, 0.0, std::nullopt}; }

TemporalSegment random_seg(Rng& rng) {
  double a = rng.uniform(0, 10), b = rng.uniform(0, 10);
  if (rng.bernoulli(0.1)) b = a;
  return seg(std::min(a, b), std::max(a, b));
}

std::vector<bool> to_bool(const std::vector<int>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_CASE("tiou closed forms") {
  CHECK(tiou(seg(1, 4), seg(1, 4)) == 1.0);
  CHECK(tiou(seg(2, 2), seg(2, 2)) == 1.0);
  CHECK(tiou(seg(0, 1), seg(2, 3)) == 0.0);
  CHECK(tiou(seg(0, 2), seg(1, 3)) == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
  CHECK(tiou(seg(2, 2), seg(1, 3)) == 0.0);
}

TEST_CASE("tiou properties") {
  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    auto a = random_seg(rng), b = random_seg(rng);
    const double v = tiou(a, b);
    CHECK(v == tiou(b, a));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(tiou(a, a) == 1.0);
    CHECK(std::abs(v - oracle::tiou(a.start_s, a.end_s, b.start_s, b.end_s)) <= 1e-12);
  }
}

TEST_CASE("average precision") {
  CHECK(metrics::average_precision(to_bool({1, 1, 1})) == 1.0);
  CHECK(metrics::average_precision(to_bool({0, 1})) == 0.5);
  CHECK(metrics::average_precision(to_bool({0, 0})) == 0.0);
  CHECK(metrics::average_precision(std::vector<bool>{}) == 0.0);
  Rng rng(12);
  for (int i = 0; i < 200; ++i) {
    std::vector<int> flags(12);
    for (auto& f : flags) f = rng.bernoulli(0.4);
    const double ap = metrics::average_precision(to_bool(flags));
    CHECK(std::abs(ap - oracle::average_precision(flags)) <= 1e-12);
    auto padded = flags;
    padded.insert(padded.end(), 5, 0);
    CHECK(metrics::average_precision(to_bool(padded)) == ap);
  }
}

TEST_CASE("levenshtein") {
  const std::vector<int> a = {1, 2, 3}, empty;
  CHECK(metrics::levenshtein(a, a) == 0);
  CHECK(metrics::levenshtein(empty, a) == 3);
  CHECK(metrics::levenshtein(std::vector<int>{1, 2, 3}, std::vector<int>{2, 3, 4}) == 2);
  Rng rng(13);
  auto random_seq = [&] {
    std::vector<int> s(static_cast<size_t>(rng.uniform_int(7)));
    for (auto& x : s) x = rng.uniform_int(3);
    return s;
  };
  for (int i = 0; i < 300; ++i) {
    auto x = random_seq(), y = random_seq(), z = random_seq();
    const int dxy = metrics::levenshtein(x, y);
    CHECK(dxy == oracle::levenshtein(x, y));
    CHECK(dxy == metrics::levenshtein(y, x));
    CHECK((dxy == 0) == (x == y));
    CHECK(metrics::levenshtein(x, z) <= dxy + metrics::levenshtein(y, z));
  }
}

TEST_CASE("top-k accuracy") {
  nn::Matrix onehot = nn::Matrix::Zero(3, 4);
  std::vector<int> labels = {2, 0, 3};
  for (int i = 0; i < 3; ++i) onehot(i, labels[i]) = 1.0;
  for (int k = 1; k <= 4; ++k) CHECK(metrics::topk_accuracy(onehot, labels, k) == 1.0);

  Rng rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    nn::Matrix z(10, 4);
    std::vector<std::vector<double>> rows(10, std::vector<double>(4));
    std::vector<int> y(10);
    for (int i = 0; i < 10; ++i) {
      y[i] = rng.uniform_int(4);
      for (int j = 0; j < 4; ++j) {
        // coarse values force ties
        z(i, j) = rows[i][j] = std::round(rng.uniform(0, 3));
      }
    }
    double prev = 0.0;
    for (int k = 1; k <= 4; ++k) {
      const double acc = metrics::topk_accuracy(z, y, k);
      CHECK(acc == oracle::topk_accuracy(rows, y, k));
      CHECK(acc >= prev);
      prev = acc;
    }
    CHECK(prev == 1.0);
  }
  CHECK_THROWS(metrics::topk_accuracy(onehot, std::vector<int>{0, 4, 1}, 1));
  CHECK_THROWS(metrics::topk_accuracy(onehot, labels, 0));
}

TEST_CASE("argmax breaks ties toward the lowest index") {
  nn::Matrix m(1, 3);
  m << 1.0, 2.0, 2.0;
  CHECK(metrics::argmax_row(m, 0) == 1);
}
