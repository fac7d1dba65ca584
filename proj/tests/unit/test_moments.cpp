#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "egovideo/common/error.hpp"
#include "egovideo/corpus/vocabulary.hpp"
#include "egovideo/metrics/metrics.hpp"
#include "egovideo/moments/moments.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace egovideo;
using namespace egovideo::moments;
namespace fs = std::filesystem;

namespace {

TemporalSegment seg(double s, double e, double score = 1.0) { return {s, e, score, std::nullopt}; }

features::SnippetFeatureTrack random_track(uint64_t seed, int n = 20, int d = 6) {
  Rng rng(seed);
  features::SnippetFeatureTrack t;
  t.features = testing::random_matrix(rng, n, d);
  t.snippet_len = 8;
  t.stride = 4;
  t.fps = 8.0;
  t.duration_s = (4.0 * (n - 1) + 8.0) / 8.0;
  t.clip_id = "clip" + std::to_string(seed);
  return t;
}

MomentConfig small_config(int categories = 4) {
  MomentConfig c;
  c.num_categories = categories;
  c.width = 16;
  return c;
}

// Step-by-step replay of the decay loop on plain arrays.
std::vector<double> hand_soft_nms(std::vector<std::array<double, 3>> c, double sigma, double floor,
                                  std::vector<std::array<double, 2>>* kept) {
  std::vector<double> scores;
  std::vector<bool> alive(c.size(), true);
  for (size_t i = 0; i < c.size(); ++i) alive[i] = c[i][2] >= floor;
  while (true) {
    int best = -1;
    for (size_t i = 0; i < c.size(); ++i)
      if (alive[i] && (best < 0 || c[i][2] > c[static_cast<size_t>(best)][2])) best = static_cast<int>(i);
    if (best < 0) break;
    const auto b = c[static_cast<size_t>(best)];
    alive[static_cast<size_t>(best)] = false;
    scores.push_back(b[2]);
    kept->push_back({b[0], b[1]});
    for (size_t i = 0; i < c.size(); ++i) {
      if (!alive[i]) continue;
      const double u = oracle::tiou(b[0], b[1], c[i][0], c[i][1]);
      c[i][2] = c[i][2] * std::exp(-(u * u) / sigma);
      if (c[i][2] < floor) alive[i] = false;
    }
  }
  return scores;
}

// Multi-clip detection AP: by descending score, each prediction claims the
// best unclaimed gt in its own clip.
double multi_clip_ap(std::vector<std::pair<std::string, oracle::Seg>> preds,
                     const std::vector<std::pair<std::string, oracle::Seg>>& gts, double t) {
  if (gts.empty()) return 0.0;
  std::stable_sort(preds.begin(), preds.end(), [](auto& a, auto& b) { return a.second.score > b.second.score; });
  std::vector<bool> used(gts.size());
  double sum = 0;
  int tp = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    int best = -1;
    double bi = -1;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g].first != preds[i].first) continue;
      const double u = oracle::tiou(preds[i].second.s, preds[i].second.e, gts[g].second.s, gts[g].second.e);
      if (u >= t && u > bi) {
        bi = u;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      used[static_cast<size_t>(best)] = true;
      sum += static_cast<double>(++tp) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(gts.size());
}

}  // namespace

TEST_CASE("without the gate decoded scores are raw sigmoid scores") {
  auto cfg = small_config();
  cfg.use_gate = false;
  MomentModel model(6, cfg);
  const auto track = random_track(1);
  const auto out = detect_moments(track, model);
  CHECK(out.gate_logits.size() == 0);
  REQUIRE(out.candidates.size() == 4);
  for (int c = 0; c < 4; ++c) {
    std::vector<double> expected;
    for (Eigen::Index i = 0; i < out.logits.rows(); ++i) expected.push_back(1.0 / (1.0 + std::exp(-out.logits(i, c))));
    std::stable_sort(expected.begin(), expected.end(), std::greater<>());
    for (size_t i = 0; i < expected.size(); ++i) CHECK(out.candidates[c][i].score == expected[i]);
  }
}

TEST_CASE("gated scores are sigmoid times gate") {
  MomentModel model(6, small_config());
  const auto out = detect_moments(random_track(2), model);
  REQUIRE(out.gate_logits.rows() == out.logits.rows());
  const auto& top = out.candidates[1][0];
  bool found = false;
  for (Eigen::Index i = 0; i < out.logits.rows(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-out.logits(i, 1))) / (1.0 + std::exp(-out.gate_logits(i, 0)));
    if (std::abs(s - top.score) < 1e-15) found = true;
  }
  CHECK(found);
}

TEST_CASE("zeroed localization head gives anchor-centred points") {
  MomentModel model(6, small_config());
  model.zero_regression_head();
  const auto track = random_track(3);
  const auto out = detect_moments(track, model);
  for (const auto& list : out.candidates)
    for (const auto& s : list) {
      CHECK(s.start_s == s.end_s);
      CHECK(std::any_of(out.anchors.begin(), out.anchors.end(), [&](const auto& a) { return a.center_s == s.start_s; }));
    }
  CHECK_THROWS_AS(detect_moments(random_track(3, 20, 5), model), InvalidArgument);
}

TEST_CASE("overfit recovers both moments of one clip") {
  corpus::WorldConfig c;
  c.seed = 41;
  c.num_clips = 1;
  c.min_duration_s = c.max_duration_s = 12.0;
  c.min_actions = c.max_actions = 2;
  c.min_action_s = 2.0;
  c.max_action_s = 4.0;
  c.max_gap_s = 3.0;
  const auto world = corpus::generate_world(c);
  encoders::EncoderConfig e;
  e.embed_dim = 16;
  e.width = 16;
  const encoders::TwoTowerModel enc(e, corpus::Vocabulary::for_world(c), 2);
  const auto tracks = grounding::index_tracks({features::extract_snippet_track(world.clips[0], enc, 8, 4)});
  const auto& ann = world.annotations.moments;
  std::vector<TemporalSegment> gts;
  for (const auto& a : ann)
    for (const auto& s : a.segments) gts.push_back(s);
  REQUIRE(gts.size() == 2);

  auto cfg = small_config(world.num_categories());
  cfg.epochs = 800;
  cfg.batch_size = 1;
  cfg.lr = 2e-3;
  const auto model = train_moments(MomentModel(16, cfg), ann, tracks);
  const auto preds = postprocess(detect_moments(tracks.begin()->second, model), cfg.nms_sigma, cfg.score_floor,
                                 cfg.max_per_category);
  std::vector<TemporalSegment> all;
  for (const auto& p : preds) all.insert(all.end(), p.segments.begin(), p.segments.end());
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  REQUIRE(all.size() >= 2);
  for (int i = 0; i < 2; ++i) {
    const auto& g = *std::max_element(gts.begin(), gts.end(), [&](const auto& a, const auto& b) {
      return metrics::tiou(all[i], a) < metrics::tiou(all[i], b);
    });
    CHECK(metrics::tiou(all[i], g) >= 0.9);
    CHECK(all[i].label == g.label);
  }
  CHECK(metrics::tiou(all[0], all[1]) < 0.9);
}

TEST_CASE("soft-NMS trivial cases") {
  const std::vector<TemporalSegment> apart{seg(0, 1, 0.9), seg(2, 3, 0.8), seg(4, 5, 0.3)};
  const auto kept = soft_nms(apart, 0.5, 0.0);
  REQUIRE(kept.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(kept[i].score == apart[i].score);
    CHECK(kept[i].start_s == apart[i].start_s);
  }
  const auto twins = soft_nms({seg(1, 2, 0.8), seg(1, 2, 0.6)}, 0.5, 0.0);
  REQUIRE(twins.size() == 2);
  CHECK(twins[1].score == 0.6 * std::exp(-1.0 / 0.5));
  CHECK(soft_nms({seg(1, 2, 0.8), seg(1, 2, 0.6)}, 0.5, 0.1).size() == 1);
  CHECK(soft_nms({}, 0.5, 0.0).empty());
  CHECK_THROWS_AS(soft_nms(apart, 0.0, 0.0), InvalidArgument);
}

TEST_CASE("soft-NMS matches a hand simulation") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<TemporalSegment> cands;
    std::vector<std::array<double, 3>> raw;
    for (int i = 0; i < 6; ++i) {
      const double s = rng.uniform(0, 5), e = s + rng.uniform(0.1, 3), sc = rng.uniform();
      cands.push_back(seg(s, e, sc));
      raw.push_back({s, e, sc});
    }
    const double floor = trial % 2 ? 0.05 : 0.0;
    std::vector<std::array<double, 2>> spans;
    const auto expected = hand_soft_nms(raw, 0.5, floor, &spans);
    const auto got = soft_nms(cands, 0.5, floor);
    REQUIRE(got.size() == expected.size());
    for (size_t i = 0; i < got.size(); ++i) {
      CHECK(std::abs(got[i].score - expected[i]) < 1e-12);
      CHECK(got[i].start_s == spans[i][0]);
      if (i > 0) CHECK(got[i].score <= got[i - 1].score);
    }
    CHECK(got.size() <= cands.size());
    const auto wide = soft_nms(cands, 1e300, 0.0);
    std::vector<double> in_scores, out_scores;
    for (const auto& c : cands) in_scores.push_back(c.score);
    for (const auto& c : wide) out_scores.push_back(c.score);
    std::sort(in_scores.begin(), in_scores.end());
    std::sort(out_scores.begin(), out_scores.end());
    CHECK(in_scores == out_scores);
  }
}

TEST_CASE("average mAP trivial cases") {
  const std::vector<corpus::MomentAnnotation> gt{{"a", 0, {seg(1, 2), seg(4, 6)}}, {"a", 2, {seg(0, 3)}},
                                                 {"b", 0, {seg(2, 5)}}};
  std::vector<MomentPrediction> exact{{"a", 0, {seg(1, 2, 0.9), seg(4, 6, 0.8)}},
                                      {"a", 2, {seg(0, 3, 0.7)}},
                                      {"b", 0, {seg(2, 5, 0.6)}}};
  auto r = average_map(exact, gt, 3);
  CHECK(r.average_map == 1.0);
  CHECK(r.recall_1x_at_05 == 1.0);
  for (double m : r.map_per_tiou) CHECK(m == 1.0);
  r = average_map({}, gt, 3);
  CHECK(r.average_map == 0.0);
  CHECK(r.recall_1x_at_05 == 0.0);
  exact.push_back({"a", 7, {seg(1, 2, 0.99)}});
  r = average_map(exact, gt, 3);
  CHECK(r.unknown_category_predictions == 1);
  CHECK(r.average_map == 1.0);
}

TEST_CASE("average mAP matches a greedy brute-force oracle") {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<corpus::MomentAnnotation> gt;
    std::vector<MomentPrediction> preds;
    std::vector<std::vector<std::pair<std::string, oracle::Seg>>> ogt(3), opred(3);
    for (int c = 0; c < 3; ++c) {
      for (const std::string clip : {"x", "y"}) {
        const int ng = rng.uniform_int(3);
        if (ng == 0) continue;
        corpus::MomentAnnotation a{clip, c, {}};
        for (int g = 0; g < ng; ++g) {
          const double s = rng.uniform(0, 10), e = s + rng.uniform(0.5, 4);
          a.segments.push_back(seg(s, e));
          ogt[c].push_back({clip, {s, e, 1}});
        }
        gt.push_back(a);
      }
      for (int p = 0; p < 5; ++p) {
        const std::string clip = rng.bernoulli(0.5) ? "x" : "y";
        const double s = rng.uniform(0, 10), e = s + rng.uniform(0.5, 4);
        const double score = std::round(rng.uniform() * 4) / 4;  // deliberate ties
        preds.push_back({clip, c, {seg(s, e, score)}});
        opred[c].push_back({clip, {s, e, score}});
      }
    }
    const auto r = average_map(preds, gt, 3);
    for (size_t ti = 0; ti < kDefaultTious.size(); ++ti) {
      double sum = 0;
      int n = 0;
      for (int c = 0; c < 3; ++c) {
        if (ogt[c].empty()) continue;
        sum += multi_clip_ap(opred[c], ogt[c], kDefaultTious[ti]);
        ++n;
      }
      CHECK(std::abs(r.map_per_tiou[ti] - (n ? sum / n : 0.0)) < 1e-9);
    }
    CHECK(r.average_map >= 0.0);
    CHECK(r.average_map <= 1.0);

    // Rank-only dependence.
    auto warped = preds;
    for (auto& p : warped)
      for (auto& s : p.segments) s.score = std::pow(s.score, 3) + 5;
    CHECK(std::abs(average_map(warped, gt, 3).average_map - r.average_map) < 1e-12);

    // A duplicate of a prediction whose only possible match is already taken
    // by the original cannot raise AP.
    for (const auto& p : preds) {
      int overlapping = 0;
      for (const auto& [clip, g] : ogt[p.category_id]) {
        if (clip == p.clip_id && oracle::tiou(p.segments[0].start_s, p.segments[0].end_s, g.s, g.e) >= 0.1) {
          ++overlapping;
        }
      }
      if (overlapping != 1) continue;
      auto dup = preds;
      dup.push_back(p);
      CHECK(average_map(dup, gt, 3).average_map <= r.average_map + 1e-12);
    }
  }
}

TEST_CASE("recall at 1x uses the gt count per clip and category") {
  const std::vector<corpus::MomentAnnotation> gt{{"a", 0, {seg(0, 2), seg(5, 7)}}};
  // Two best-scoring predictions both cover the first instance.
  std::vector<MomentPrediction> preds{{"a", 0, {seg(0, 2, 0.9), seg(0.1, 2, 0.8), seg(5, 7, 0.7)}}};
  CHECK(average_map(preds, gt, 1).recall_1x_at_05 == 0.5);
  preds[0].segments[1].score = 0.1;
  CHECK(average_map(preds, gt, 1).recall_1x_at_05 == 1.0);
}

TEST_CASE("logit ensembling") {
  MomentModel a(6, small_config()), b(6, [] {
    auto c = small_config();
    c.seed = 9;
    return c;
  }());
  const auto track = random_track(5);
  const auto oa = detect_moments(track, a), ob = detect_moments(track, b);

  for (int k = 1; k <= 4; ++k) {
    const std::vector<DetectionOutput> copies(static_cast<size_t>(k), oa);
    const auto e = ensemble_detections(copies);
    CHECK(e.logits == oa.logits);
    for (size_t c = 0; c < e.candidates.size(); ++c) {
      REQUIRE(e.candidates[c].size() == oa.candidates[c].size());
      for (size_t i = 0; i < e.candidates[c].size(); ++i) {
        CHECK(e.candidates[c][i].start_s == oa.candidates[c][i].start_s);
        CHECK(e.candidates[c][i].end_s == oa.candidates[c][i].end_s);
        CHECK(e.candidates[c][i].score == oa.candidates[c][i].score);
      }
    }
    const auto pa = postprocess(oa, 0.5, 1e-3, 20), pe = postprocess(e, 0.5, 1e-3, 20);
    REQUIRE(pa.size() == pe.size());
    for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].segments.size() == pe[i].segments.size());
  }

  auto neg = oa;
  neg.logits = -oa.logits;
  const auto zero = ensemble_detections(std::vector{oa, neg});
  CHECK(zero.logits.isZero(0.0));
  const auto flat = zero.candidates[0];
  auto flat_no_gate = oa;
  flat_no_gate.gate_logits.resize(0, 0);
  auto neg_no_gate = neg;
  neg_no_gate.gate_logits.resize(0, 0);
  for (const auto& s : ensemble_detections(std::vector{flat_no_gate, neg_no_gate}).candidates[2]) CHECK(s.score == 0.5);

  const auto mixed = ensemble_detections(std::vector{oa, ob});
  DetectionOutput manual = oa;
  manual.logits = (oa.logits + ob.logits) / 2.0;
  manual.offsets = (oa.offsets + ob.offsets) / 2.0;
  manual.gate_logits = (oa.gate_logits + ob.gate_logits) / 2.0;
  decode_candidates(manual);
  for (size_t c = 0; c < manual.candidates.size(); ++c)
    for (size_t i = 0; i < manual.candidates[c].size(); ++i) {
      CHECK(std::abs(mixed.candidates[c][i].score - manual.candidates[c][i].score) < 1e-12);
      CHECK(std::abs(mixed.candidates[c][i].start_s - manual.candidates[c][i].start_s) < 1e-12);
    }

  const auto other = detect_moments(random_track(6, 12), a);
  CHECK_THROWS_AS(ensemble_detections(std::vector{oa, other}), InvalidArgument);
  CHECK_THROWS_AS(ensemble_detections(std::vector<DetectionOutput>{}), InvalidArgument);
}

TEST_CASE("prediction and detection files round trip") {
  const auto dir = fs::temp_directory_path() / "egovideo_moments_test";
  fs::remove_all(dir);
  const std::vector<MomentPrediction> preds{{"a", 1, {seg(0, 1, 0.5)}}, {"b", 0, {}}};
  write_predictions(dir / "p.jsonl", preds);
  const auto back = read_predictions(dir / "p.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].segments[0].score == 0.5);
  CHECK(back[0].segments[0].label == 1);

  MomentModel model(6, small_config());
  const auto out = detect_moments(random_track(4), model);
  write_detections(dir / "d.jsonl", std::vector{out});
  const auto det = read_detections(dir / "d.jsonl");
  REQUIRE(det.size() == 1);
  CHECK(det[0].logits == out.logits);
  CHECK(det[0].offsets == out.offsets);
  CHECK(det[0].gate_logits == out.gate_logits);
  CHECK(det[0].candidates[0][0].score == out.candidates[0][0].score);
  CHECK_THROWS_AS(read_detections(dir / "none.jsonl"), MissingDependency);
  fs::remove_all(dir);
}

TEST_CASE("training contract") {
  MomentModel model(6, small_config());
  const auto tracks = grounding::index_tracks({random_track(8)});
  const std::vector<corpus::MomentAnnotation> ann{{"clip8", 1, {seg(1, 3)}}};
  auto cfg = small_config();
  cfg.epochs = 0;
  const MomentModel frozen(6, cfg);
  const auto same = train_moments(frozen, ann, tracks);
  for (size_t i = 0; i < same.parameters().size(); ++i)
    CHECK(same.parameters()[i].var.value() == frozen.parameters()[i].var.value());
  CHECK_THROWS_AS(train_moments(model, {}, tracks), InvalidArgument);
  CHECK_THROWS_AS(train_moments(model, std::vector<corpus::MomentAnnotation>{{"clip8", 9, {seg(1, 3)}}}, tracks),
                  InvalidArgument);
  CHECK_THROWS_AS(train_moments(model, std::vector<corpus::MomentAnnotation>{{"zz", 1, {seg(1, 3)}}}, tracks),
                  MissingDependency);
  const auto back = moment_config_from_json(to_json(small_config()));
  CHECK(to_json(back) == to_json(small_config()));
}
