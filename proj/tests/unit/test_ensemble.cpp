#include <doctest.h>

#include <algorithm>

#include "egovideo/common/error.hpp"
#include "egovideo/ensemble/ensemble.hpp"
#include "egovideo/metrics/metrics.hpp"
#include "gradcheck.hpp"

using namespace egovideo;
using namespace egovideo::ensemble;

namespace {

TemporalSegment seg(double s, double e, double score) { return {s, e, score, std::nullopt}; }

std::vector<TemporalSegment> random_list(Rng& rng, int n) {
  std::vector<TemporalSegment> out;
  for (int i = 0; i < n; ++i) {
    const double s = 20.0 * rng.uniform();
    out.push_back(seg(s, s + 0.5 + 4.0 * rng.uniform(), rng.uniform()));
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  return out;
}

using Lists = std::vector<std::vector<TemporalSegment>>;

void check_same(const std::vector<TemporalSegment>& a, const std::vector<TemporalSegment>& b) {
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].start_s == doctest::Approx(b[i].start_s).epsilon(1e-12));
    CHECK(a[i].end_s == doctest::Approx(b[i].end_s).epsilon(1e-12));
    CHECK(a[i].score == doctest::Approx(b[i].score).epsilon(1e-12));
  }
}

}  // namespace

TEST_CASE("averaging logits") {
  Rng rng(1);
  const Matrix x = testing::random_matrix(rng, 5, 7);
  CHECK(average_logits(std::vector<Matrix>{x}) == x);
  for (int k = 2; k <= 5; ++k) CHECK(average_logits(std::vector<Matrix>(static_cast<size_t>(k), x)) == x);
  CHECK(average_logits(std::vector<Matrix>{x, -x}).isZero(0.0));

  const Matrix y = testing::random_matrix(rng, 5, 7), z = testing::random_matrix(rng, 5, 7);
  const Matrix avg = average_logits(std::vector<Matrix>{x, y, z});
  CHECK((avg - (x + y + z) / 3.0).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(average_logits(std::vector<Matrix>{z, x, y}) == avg);
  CHECK(average_logits(std::vector<Matrix>{y, z, x}) == avg);

  CHECK_THROWS_AS(average_logits(std::vector<Matrix>{}), InvalidArgument);
  CHECK_THROWS_AS(average_logits(std::vector<Matrix>{x, Matrix::Zero(5, 6)}), InvalidArgument);
  LogitBundle bundle{{x, y}, {"snippets:16", "snippets:8"}};
  CHECK_THROWS_AS(average_logits(bundle), InvalidArgument);
  bundle.geometry = {"snippets:16", "snippets:16"};
  CHECK(average_logits(bundle) == average_logits(std::vector<Matrix>{x, y}));
}

TEST_CASE("averaged argmax ignores per-model row constants") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix a = testing::random_matrix(rng, 4, 6), b = testing::random_matrix(rng, 4, 6);
    const Matrix base = average_logits(std::vector<Matrix>{a, b});
    const Matrix shifted = average_logits(std::vector<Matrix>{
        (a.array() + 3.0 * rng.normal()).matrix(), (b.array() + 3.0 * rng.normal()).matrix()});
    for (nn::Index r = 0; r < 4; ++r) CHECK(metrics::argmax_row(base, r) == metrics::argmax_row(shifted, r));
  }
}

TEST_CASE("merge with one model is the identity") {
  Rng rng(3);
  // Spread-out segments so that no two of one list overlap.
  std::vector<TemporalSegment> list;
  for (int i = 0; i < 6; ++i) list.push_back(seg(10.0 * i, 10.0 * i + 3.0, 1.0 - 0.1 * i));
  check_same(merge_ranked_predictions(Lists{list}, std::vector{1.0}), list);
  // Same-model overlaps are never collapsed.
  const auto noisy = random_list(rng, 8);
  check_same(merge_ranked_predictions(Lists{noisy}, std::vector{1.0}), noisy);
}

TEST_CASE("merge of identical lists keeps ranking and scores") {
  Rng rng(4);
  std::vector<TemporalSegment> list;
  for (int i = 0; i < 5; ++i) list.push_back(seg(10.0 * i, 10.0 * i + 4.0, 0.9 - 0.15 * i));
  check_same(merge_ranked_predictions(Lists{list, list}, std::vector{0.5, 0.5}), list);
  check_same(merge_ranked_predictions(Lists{list, list, list}, uniform_weights(3)), list);
}

TEST_CASE("merge matches a hand trace") {
  const std::vector<TemporalSegment> a{seg(0, 10, 0.9), seg(20, 30, 0.6), seg(40, 50, 0.3)};
  const std::vector<TemporalSegment> b{seg(21, 31, 0.8), seg(60, 70, 0.5), seg(80, 90, 0.2)};
  // a2 and b1 overlap at 9/11; every other pair is disjoint.
  // a2: 0.5*0.6 + 0.5*0.8 = 0.7, b1: 0.5*0.8 + 0.5*0.6 = 0.7; a2 wins the
  // tie as model 0 and absorbs b1 with interval weights 0.3 and 0.4.
  const auto merged = merge_ranked_predictions(Lists{a, b}, std::vector{0.5, 0.5});
  const std::vector<TemporalSegment> want{seg((0.3 * 20 + 0.4 * 21) / 0.7, (0.3 * 30 + 0.4 * 31) / 0.7, 0.7),
                                          seg(0, 10, 0.45), seg(60, 70, 0.25), seg(40, 50, 0.15),
                                          seg(80, 90, 0.1)};
  check_same(merged, want);
}

TEST_CASE("merge ranking is invariant under common score scaling") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = random_list(rng, 6), b = random_list(rng, 6), c = random_list(rng, 6);
    const std::vector<double> w{0.2, 0.3, 0.5};
    const auto base = merge_ranked_predictions(Lists{a, b, c}, w);
    const double k = 0.1 + 10.0 * rng.uniform();
    auto scale = [k](std::vector<TemporalSegment> l) {
      for (auto& s : l) s.score *= k;
      return l;
    };
    const auto scaled = merge_ranked_predictions(Lists{scale(a), scale(b), scale(c)}, w);
    REQUIRE(base.size() == scaled.size());
    for (size_t i = 0; i < base.size(); ++i) {
      CHECK(scaled[i].start_s == doctest::Approx(base[i].start_s).epsilon(1e-9));
      CHECK(scaled[i].end_s == doctest::Approx(base[i].end_s).epsilon(1e-9));
      CHECK(scaled[i].score == doctest::Approx(k * base[i].score).epsilon(1e-9));
    }
    for (size_t i = 1; i < base.size(); ++i) CHECK(base[i - 1].score >= base[i].score);
  }
}

TEST_CASE("merge errors and empty pools") {
  const std::vector<TemporalSegment> a{seg(0, 1, 1.0)};
  CHECK(merge_ranked_predictions(Lists{{}, {}}, std::vector{0.5, 0.5}).empty());
  CHECK_THROWS_AS(merge_ranked_predictions(Lists{a, a}, std::vector{0.7, 0.7}), InvalidArgument);
  CHECK_THROWS_AS(merge_ranked_predictions(Lists{a, a}, std::vector{1.5, -0.5}), InvalidArgument);
  CHECK_THROWS_AS(merge_ranked_predictions(Lists{a}, std::vector{0.5, 0.5}), InvalidArgument);
  CHECK_THROWS_AS(merge_ranked_predictions(Lists{{seg(2, 1, 1.0)}}, std::vector{1.0}),
                  InvalidArgument);
}

TEST_CASE("prediction sets merge per query") {
  QueryPredictions p1{{"q1", {seg(0, 4, 0.8)}}, {"q2", {seg(5, 6, 0.4)}}};
  QueryPredictions p2{{"q1", {seg(0, 4, 0.6)}}, {"q3", {seg(1, 2, 0.2)}}};
  const auto merged = merge_prediction_sets(std::vector{p1, p2}, uniform_weights(2));
  REQUIRE(merged.size() == 3);
  REQUIRE(merged.at("q1").size() == 1);
  CHECK(merged.at("q1")[0].score == doctest::Approx(0.7));
  CHECK(merged.at("q2")[0].score == doctest::Approx(0.2));
  CHECK(merged.at("q3")[0].score == doctest::Approx(0.1));
}

TEST_CASE("weight parsing") {
  CHECK(parse_weights("0.25,0.75", 2) == std::vector{0.25, 0.75});
  CHECK(parse_weights("", 4) == std::vector(4, 0.25));
  CHECK_THROWS_AS(parse_weights("0.5,x", 2), InvalidArgument);
  CHECK_THROWS_AS(parse_weights("0.5,0.6", 2), InvalidArgument);
  CHECK_THROWS_AS(parse_weights("1.0", 2), InvalidArgument);
}
