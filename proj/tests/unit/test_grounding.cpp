#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "egovideo/common/error.hpp"
#include "egovideo/corpus/vocabulary.hpp"
#include "egovideo/grounding/grounding.hpp"
#include "egovideo/metrics/metrics.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace egovideo;
using namespace egovideo::grounding;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  corpus::World world;
  encoders::TwoTowerModel encoder;
  TrackIndex tracks;
  std::vector<GroundingQuery> queries;

  Fixture() {
    corpus::WorldConfig c;
    c.seed = 31;
    c.num_clips = 4;
    c.min_duration_s = c.max_duration_s = 12.0;
    c.min_actions = c.max_actions = 3;
    c.min_action_s = 2.0;
    c.max_action_s = 3.5;
    world = corpus::generate_world(c);
    encoders::EncoderConfig e;
    e.embed_dim = 16;
    e.width = 16;
    encoder = encoders::TwoTowerModel(e, corpus::Vocabulary::for_world(c), 2);
    std::vector<features::SnippetFeatureTrack> t;
    for (const auto& clip : world.clips) t.push_back(features::extract_snippet_track(clip, encoder, 8, 4));
    tracks = index_tracks(std::move(t));
    queries = queries_from(world.annotations.nlq);
  }

  GroundingConfig small_config() const {
    GroundingConfig g;
    g.width = 16;
    g.levels = 3;
    return g;
  }
};

features::SnippetFeatureTrack dummy_track(int n, int d = 3) {
  features::SnippetFeatureTrack t;
  Rng rng(n);
  t.features = testing::random_matrix(rng, n, d);
  t.snippet_len = 8;
  t.stride = 4;
  t.fps = 8.0;
  t.duration_s = (4.0 * (n - 1) + 8.0) / 8.0;
  t.clip_id = "c";
  return t;
}

void set_param(const GroundingModel& m, const std::string& name, double v) {
  for (const auto& p : m.parameters())
    if (p.name == name) {
      p.var.mutable_value().setConstant(v);
      return;
    }
  FAIL("missing parameter " << name);
}

TemporalSegment seg(double s, double e, double score = 1.0) { return {s, e, score, std::nullopt}; }

}  // namespace

TEST_CASE("pyramid lengths") {
  CHECK(build_pyramid(dummy_track(5), 1).size() == 1);
  CHECK(build_pyramid(dummy_track(5), 1)[0].features.rows() == 5);
  const auto p = build_pyramid(dummy_track(8), 3);
  REQUIRE(p.size() == 3);
  CHECK(p[0].stamps_s.size() == 8);
  CHECK(p[1].stamps_s.size() == 4);
  CHECK(p[2].stamps_s.size() == 2);
  const auto odd = build_pyramid(dummy_track(7), 4);
  CHECK(odd[1].stamps_s.size() == 4);
  CHECK(odd[2].stamps_s.size() == 2);
  CHECK(odd[3].stamps_s.size() == 1);
  for (int n = 1; n < 40; ++n) {
    const auto q = build_pyramid(dummy_track(n), 4);
    for (int l = 0; l < 4; ++l) {
      CHECK(static_cast<int>(q[l].stamps_s.size()) == (n + (1 << l) - 1) / (1 << l));
      CHECK(q[l].features.rows() == static_cast<int>(q[l].stamps_s.size()));
    }
  }
}

TEST_CASE("pyramid stamps are parent midpoints") {
  const auto t = dummy_track(9);
  const auto p = build_pyramid(t, 2);
  for (int j = 0; j < 5; ++j) {
    // Level-0 centres straight from the snippet geometry.
    const double a = (4.0 * (2 * j) + 4.0) / 8.0;
    const double b = 2 * j + 1 < 9 ? (4.0 * (2 * j + 1) + 4.0) / 8.0 : a;
    CHECK(p[1].stamps_s[j] == doctest::Approx(0.5 * (a + b)).epsilon(1e-15));
    const Eigen::RowVectorXd parent_mean =
        2 * j + 1 < 9 ? Eigen::RowVectorXd(0.5 * (t.features.row(2 * j) + t.features.row(2 * j + 1)))
                      : Eigen::RowVectorXd(t.features.row(2 * j));
    CHECK((p[1].features.row(j) - parent_mean).norm() < 1e-15);
  }
  CHECK(p[1].unit_s == 2 * p[0].unit_s);
}

TEST_CASE("zeroed regression head decodes to points at anchor centres") {
  Fixture f;
  GroundingModel model(f.encoder, 16, f.small_config());
  model.zero_regression_head();
  const auto& track = f.tracks.begin()->second;
  nn::NoGradGuard guard;
  const auto out = model.forward(track, model.encode_query("C cuts the tomato"));
  const auto segs = decode(out, track.duration_s, static_cast<int>(out.anchors.size()));
  REQUIRE(segs.size() == out.anchors.size());
  std::vector<double> centers;
  for (const auto& a : out.anchors) centers.push_back(a.center_s);
  for (const auto& s : segs) {
    CHECK(s.start_s == s.end_s);
    CHECK(std::find(centers.begin(), centers.end(), s.start_s) != centers.end());
  }
}

TEST_CASE("equal scores rank by level then position") {
  Fixture f;
  GroundingModel model(f.encoder, 16, f.small_config());
  set_param(model, "ground.cls.fc2.weight", 0.0);
  const auto& track = f.tracks.begin()->second;
  nn::NoGradGuard guard;
  const auto out = model.forward(track, model.encode_query("C cuts the tomato"));
  const int p = static_cast<int>(out.anchors.size());
  const auto segs = decode(out, track.duration_s, p);
  for (int i = 0; i < p; ++i) {
    const auto expected = decode_offsets(out.anchors[i], out.offsets.value()(i, 0), out.offsets.value()(i, 1),
                                         track.duration_s);
    CHECK(segs[i].start_s == expected.start_s);
    CHECK(segs[i].end_s == expected.end_s);
  }
  CHECK(static_cast<int>(ground_query(track, "C cuts the tomato", model).size()) == model.config().top_k);
}

TEST_CASE("decoded segments stay inside the clip") {
  Fixture f;
  for (uint64_t seed = 0; seed < 4; ++seed) {
    auto cfg = f.small_config();
    cfg.seed = seed;
    cfg.top_k = 1000;
    GroundingModel model(f.encoder, 16, cfg);
    for (const auto& p : model.parameters()) {
      if (p.name == "ground.reg.out.bias") p.var.mutable_value().setConstant(40.0);
    }
    for (const auto& [id, track] : f.tracks) {
      for (const auto& s : ground_query(track, "C washes the onion", model)) {
        CHECK(0.0 <= s.start_s);
        CHECK(s.start_s <= s.end_s);
        CHECK(s.end_s <= track.duration_s);
      }
    }
  }
}

TEST_CASE("cross-modal encoder variant") {
  Fixture f;
  auto cfg = f.small_config();
  cfg.cross_modal = true;
  GroundingModel model(f.encoder, 16, cfg);
  const auto params = model.parameters();
  CHECK(std::any_of(params.begin(), params.end(),
                    [](const nn::NamedParam& p) { return p.name.find(".cross.") != std::string::npos; }));
  CHECK(ground_query(f.tracks.begin()->second, "C cuts the tomato", model).size() == 5);
  const auto plain = GroundingModel(f.encoder, 16, f.small_config()).parameters();
  CHECK(plain.size() < params.size());
}

TEST_CASE("rejects mismatched and empty inputs") {
  Fixture f;
  GroundingModel model(f.encoder, 16, f.small_config());
  CHECK_THROWS_AS(ground_query(dummy_track(5, 7), "x", model), InvalidArgument);
  auto empty = dummy_track(1, 16);
  empty.features.resize(0, 16);
  CHECK_THROWS_AS(ground_query(empty, "x", model), InvalidArgument);
  CHECK_THROWS_AS(train_grounding(model, {}, {}, f.tracks), InvalidArgument);
  const std::vector<GroundingQuery> orphan{{"q", "nope", "x", seg(0, 1)}};
  CHECK_THROWS_AS(train_grounding(model, {}, orphan, f.tracks), MissingDependency);
}

TEST_CASE("zero epochs returns the initial weights") {
  Fixture f;
  auto cfg = f.small_config();
  cfg.pretrain.epochs = 0;
  cfg.finetune.epochs = 0;
  GroundingModel model(f.encoder, 16, cfg);
  const auto trained = train_grounding(model, f.queries, f.queries, f.tracks);
  const auto a = model.parameters(), b = trained.parameters();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].var.value() == b[i].var.value());
}

TEST_CASE("schedule runs one or two phases") {
  Fixture f;
  auto cfg = f.small_config();
  cfg.pretrain = {4, 2, 1, 2e-4};
  cfg.finetune = {2, 3, 1, 5e-5};
  GroundingModel model(f.encoder, 16, cfg);
  std::vector<GroundingTrainLog> log;
  train_grounding(model, {}, f.queries, f.tracks, &log);
  CHECK(log.size() == 3);
  CHECK(std::all_of(log.begin(), log.end(), [](const auto& l) { return l.phase == "finetune"; }));
  log.clear();
  const auto naq = synthesize_pretrain_queries(f.world, 5 * static_cast<int>(f.queries.size()), 1);
  CHECK(naq.size() == 5 * f.queries.size());
  train_grounding(model, naq, f.queries, f.tracks, &log);
  REQUIRE(log.size() == 5);
  CHECK(log[0].phase == "pretrain");
  CHECK(log[2].phase == "finetune");
  // Same inputs, same weights.
  const auto a = train_grounding(model, naq, f.queries, f.tracks).parameters();
  const auto b = train_grounding(model, naq, f.queries, f.tracks).parameters();
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].var.value() == b[i].var.value());
}

TEST_CASE("synthetic pretraining queries point at their script entries") {
  Fixture f;
  const auto naq = synthesize_pretrain_queries(f.world, 40, 9);
  const auto vocab = corpus::Vocabulary::for_world(f.world.config);
  for (const auto& q : naq) {
    const auto& clip = f.world.clip(q.clip_id);
    const auto parsed = vocab.parse(q.query_text);
    const auto it = std::find_if(clip.script.entries.begin(), clip.script.entries.end(), [&](const auto& e) {
      return e.start_s == q.gt.start_s && e.end_s == q.gt.end_s;
    });
    REQUIRE(it != clip.script.entries.end());
    CHECK(parsed.verbs.count(it->verb_id) == 1);
    CHECK(parsed.nouns.count(it->noun_id) == 1);
  }
}

TEST_CASE("toy model overfits a single query") {
  Fixture f;
  auto cfg = f.small_config();
  cfg.finetune = {1, 800, 5, 2e-3};
  GroundingModel model(f.encoder, 16, cfg);
  const std::vector<GroundingQuery> one{f.queries.front()};
  const auto trained = train_grounding(model, {}, one, f.tracks);
  const auto top = ground_query(f.tracks.at(one[0].clip_id), one[0].query_text, trained);
  REQUIRE(!top.empty());
  CHECK(metrics::tiou(top[0], one[0].gt) >= 0.9);
}

TEST_CASE("recall table trivial cases") {
  const std::vector<GroundingQuery> gt{{"a", "c", "x", seg(1, 3)}, {"b", "c", "y", seg(4, 6)}};
  GroundingPredictions exact{{"a", {seg(1, 3)}}, {"b", {seg(4, 6)}}};
  auto t = eval_grounding(exact, gt);
  for (int k : {1, 5})
    for (double u : {0.3, 0.5}) CHECK(t.at(k, u) == 1.0);
  GroundingPredictions empty{{"a", {}}, {"b", {}}};
  t = eval_grounding(empty, gt);
  for (int k : {1, 5})
    for (double u : {0.3, 0.5}) CHECK(t.at(k, u) == 0.0);
  t = eval_grounding({{"a", {seg(1, 3)}}}, gt);
  CHECK(t.missing == 1);
  CHECK(t.at(1, 0.5) == 0.5);
  CHECK_THROWS_AS(eval_grounding({{"a", {seg(3, 1)}}}, gt), InvalidArgument);
}

TEST_CASE("recall table matches brute force") {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<GroundingQuery> gt;
    GroundingPredictions preds;
    std::vector<oracle::Seg> ogt;
    std::vector<std::vector<oracle::Seg>> opred;
    for (int q = 0; q < 10; ++q) {
      const double s = rng.uniform(0, 20), e = s + rng.uniform(0.5, 8);
      gt.push_back({"q" + std::to_string(q), "c", "", seg(s, e)});
      ogt.push_back({s, e, 1});
      std::vector<oracle::Seg> list;
      for (int r = 0; r < 5; ++r) {
        const double ps = rng.uniform(0, 20);
        list.push_back({ps, ps + rng.uniform(0, 8), 1.0 - 0.1 * r});
      }
      // Shuffle the stored order; ranking must come from the scores.
      std::vector<TemporalSegment> stored;
      for (const auto& p : list) stored.push_back(seg(p.s, p.e, p.score));
      rng.shuffle(stored);
      preds["q" + std::to_string(q)] = stored;
      opred.push_back(list);
    }
    const auto table = eval_grounding(preds, gt);
    for (int k : {1, 5})
      for (double u : {0.3, 0.5}) CHECK(table.at(k, u) == oracle::recall_at(opred, ogt, k, u));

    // Monotone in k and in threshold, invariant to positive score scaling.
    CHECK(table.at(5, 0.3) >= table.at(1, 0.3));
    CHECK(table.at(5, 0.5) >= table.at(1, 0.5));
    CHECK(table.at(1, 0.3) >= table.at(1, 0.5));
    CHECK(table.at(5, 0.3) >= table.at(5, 0.5));
    auto scaled = preds;
    for (auto& [id, segs] : scaled)
      for (auto& s : segs) s.score *= 7.5;
    CHECK(eval_grounding(scaled, gt).cells == table.cells);
  }
}

TEST_CASE("prediction files round trip and reject malformed segments") {
  const auto dir = fs::temp_directory_path() / "egovideo_grounding_test";
  fs::remove_all(dir);
  GroundingPredictions p{{"q1", {seg(0.5, 2.0, 0.9), seg(1, 1, 0.1)}}, {"q2", {}}};
  write_predictions(dir / "pred.jsonl", p);
  const auto back = read_predictions(dir / "pred.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back.at("q1").size() == 2);
  CHECK(back.at("q1")[0].start_s == 0.5);
  CHECK(back.at("q1")[0].score == 0.9);
  {
    std::ofstream bad(dir / "bad.jsonl");
    bad << R"({"query_id": "q", "segments": [{"start_s": 3.0, "end_s": 1.0, "score": 0.5}]})" << "\n";
  }
  CHECK_THROWS_AS(read_predictions(dir / "bad.jsonl"), InvalidArgument);
  CHECK_THROWS_AS(read_predictions(dir / "missing.jsonl"), MissingDependency);
  fs::remove_all(dir);
}

TEST_CASE("configuration") {
  GroundingConfig c;
  CHECK_NOTHROW(validate(c));
  CHECK(c.pretrain.max_lr == 2e-4);
  CHECK(c.finetune.max_lr == 5e-5);
  c.finetune.warmup_epochs = 10;
  CHECK_THROWS_AS(validate(c), InvalidArgument);
  const auto step = with_step_overrides(GroundingConfig{});
  CHECK(step.finetune.batch_size == 8);
  CHECK(step.dropout == 0.2);
  CHECK(step.drop_path == 0.2);
  const auto back = grounding_config_from_json(to_json(step));
  CHECK(to_json(back) == to_json(step));
}
