#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "egovideo/anticipation/anticipation.hpp"
#include "egovideo/common/error.hpp"
#include "egovideo/corpus/vocabulary.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace egovideo;
using namespace egovideo::anticipation;
namespace fs = std::filesystem;

namespace {

Sequence random_sequence(Rng& rng, int len, int v = 4, int n = 4) {
  Sequence s;
  for (int i = 0; i < len; ++i) s.push_back({rng.uniform_int(v), rng.uniform_int(n)});
  return s;
}

std::vector<int> channel(const Sequence& s, int which, int nn) {
  std::vector<int> out;
  for (const auto& t : s) out.push_back(which == 0 ? t.verb_id : which == 1 ? t.noun_id : t.action_id(nn));
  return out;
}

corpus::WorldConfig cyclic_world(uint64_t seed, int clips) {
  corpus::WorldConfig wc;
  wc.seed = seed;
  wc.num_clips = clips;
  wc.min_actions = 36;
  wc.max_actions = 36;
  wc.min_action_s = 0.5;
  wc.max_action_s = 0.5;
  wc.max_gap_s = 0.0;
  wc.min_duration_s = 18.0;
  wc.max_duration_s = 18.0;
  wc.transition_determinism = 1.0;
  wc.height = 8;
  wc.width = 8;
  return wc;
}

LTAConfig fast_config() {
  LTAConfig c;
  c.epochs = 30;
  c.lr = 3e-3;
  c.batch_size = 8;
  return c;
}

double single_ed(const Sequence& a, const Sequence& b, int which) {
  std::vector<std::vector<Sequence>> c{{a}};
  std::vector<Sequence> g{b};
  const auto ed = edit_distance_eval(c, g, 4);
  return which == 0 ? ed.verb : which == 1 ? ed.noun : ed.action;
}

}  // namespace

TEST_CASE("perfect logits give full top-1") {
  Rng rng(1);
  std::vector<ActionToken> labels;
  for (int i = 0; i < 30; ++i) labels.push_back({rng.uniform_int(5), rng.uniform_int(3)});
  nn::Matrix v = nn::Matrix::Zero(30, 5), n = nn::Matrix::Zero(30, 3);
  for (int i = 0; i < 30; ++i) {
    v(i, labels[static_cast<size_t>(i)].verb_id) = 1.0;
    n(i, labels[static_cast<size_t>(i)].noun_id) = 1.0;
  }
  const auto top1 = classification_top1(v, n, labels);
  CHECK(top1.verb == 1.0);
  CHECK(top1.noun == 1.0);
  CHECK(top1.action == 1.0);
}

TEST_CASE("uniform logits pick id 0 and match the base rate") {
  Rng rng(2);
  std::vector<ActionToken> labels;
  for (int i = 0; i < 200; ++i) labels.push_back({rng.uniform_int(3), rng.uniform_int(4)});
  int v0 = 0, n0 = 0, both = 0;
  for (const auto& l : labels) {
    v0 += l.verb_id == 0;
    n0 += l.noun_id == 0;
    both += l.verb_id == 0 && l.noun_id == 0;
  }
  const auto top1 = classification_top1(nn::Matrix::Zero(200, 3), nn::Matrix::Zero(200, 4), labels);
  CHECK(top1.verb == doctest::Approx(v0 / 200.0));
  CHECK(top1.noun == doctest::Approx(n0 / 200.0));
  CHECK(top1.action == doctest::Approx(both / 200.0));
}

TEST_CASE("action top-1 never exceeds verb or noun top-1") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ActionToken> labels;
    for (int i = 0; i < 20; ++i) labels.push_back({rng.uniform_int(4), rng.uniform_int(4)});
    const auto top1 = classification_top1(testing::random_matrix(rng, 20, 4), testing::random_matrix(rng, 20, 4),
                                          labels);
    CHECK(top1.action <= std::min(top1.verb, top1.noun));
  }
  CHECK_THROWS_AS(classification_top1(nn::Matrix::Zero(2, 4), nn::Matrix::Zero(2, 4), std::vector<ActionToken>(3)),
                  InvalidArgument);
}

TEST_CASE("classify_clip returns logits over both label spaces") {
  auto wc = cyclic_world(4, 1);
  wc.min_actions = wc.max_actions = 28;
  wc.min_duration_s = wc.max_duration_s = 14.0;
  const auto world = corpus::generate_world(wc);
  encoders::EncoderConfig ec;
  ec.height = 8;
  ec.width_px = 8;
  ec.embed_dim = 8;
  ec.width = 8;
  const encoders::TwoTowerModel backbone(ec, corpus::Vocabulary::for_world(wc), 1);
  const encoders::ActionClassifier clf(backbone, 4, 4, 2);
  const auto logits = classify_clip(world.clips[0].entry_view(0), clf);
  CHECK(logits.verb.cols() == 4);
  CHECK(logits.noun.cols() == 4);
  const auto tok = predicted_action(logits);
  CHECK(tok.verb_id >= 0);
  CHECK(tok.verb_id < 4);

  REQUIRE(!world.annotations.anticipation.empty());
  const auto& a = world.annotations.anticipation.front();
  const auto history = infer_history(world.clips[0], a, clf);
  CHECK(history.size() == 8);
}

TEST_CASE("edit distance trivial cases") {
  Rng rng(5);
  const Sequence a = random_sequence(rng, 20);
  for (int which = 0; which < 3; ++which) CHECK(single_ed(a, a, which) == 0.0);

  Sequence low, high;
  for (int i = 0; i < 20; ++i) {
    low.push_back({i % 2, i % 2});
    high.push_back({2 + i % 2, 2 + i % 2});
  }
  for (int which = 0; which < 3; ++which) CHECK(single_ed(low, high, which) == doctest::Approx(100.0));
}

TEST_CASE("edit distance matches a DP oracle") {
  Rng rng(6);
  std::vector<std::vector<Sequence>> cands;
  std::vector<Sequence> gt;
  double want[3] = {0, 0, 0};
  for (int e = 0; e < 4; ++e) {
    gt.push_back(random_sequence(rng, 20));
    cands.push_back({random_sequence(rng, 20), random_sequence(rng, 20)});
    for (int which = 0; which < 3; ++which) {
      int best = 1000;
      for (const auto& c : cands.back()) {
        best = std::min(best, oracle::levenshtein(channel(c, which, 4), channel(gt.back(), which, 4)));
      }
      want[which] += best / 20.0;
    }
  }
  const auto ed = edit_distance_eval(cands, gt, 4);
  CHECK(ed.verb == doctest::Approx(100.0 * want[0] / 4.0).epsilon(1e-12));
  CHECK(ed.noun == doctest::Approx(100.0 * want[1] / 4.0).epsilon(1e-12));
  CHECK(ed.action == doctest::Approx(100.0 * want[2] / 4.0).epsilon(1e-12));
}

TEST_CASE("edit distance is a metric on fixed-length sequences") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    // Small alphabets so that equal and near-equal sequences occur.
    const Sequence a = random_sequence(rng, 20, 2, 2);
    const Sequence b = random_sequence(rng, 20, 2, 2);
    const Sequence c = trial % 5 == 0 ? a : random_sequence(rng, 20, 2, 2);
    for (int which = 0; which < 3; ++which) {
      const double ab = single_ed(a, b, which), ba = single_ed(b, a, which);
      const double ac = single_ed(a, c, which), bc = single_ed(b, c, which);
      CHECK(ab == ba);
      CHECK(ac <= ab + bc + 1e-9);
      CHECK((ab == 0.0) == (channel(a, which, 4) == channel(b, which, 4)));
      CHECK(ab >= 0.0);
      CHECK(ab <= 100.0);
    }
  }
}

TEST_CASE("more candidates never raise the edit distance") {
  Rng rng(8);
  std::vector<std::vector<Sequence>> k1, k5;
  std::vector<Sequence> gt;
  for (int e = 0; e < 100; ++e) {
    gt.push_back(random_sequence(rng, 20));
    std::vector<Sequence> c;
    for (int k = 0; k < 5; ++k) c.push_back(random_sequence(rng, 20));
    k1.push_back({c.front()});
    k5.push_back(c);
  }
  const auto one = edit_distance_eval(k1, gt, 4);
  const auto five = edit_distance_eval(k5, gt, 4);
  CHECK(five.verb <= one.verb);
  CHECK(five.noun <= one.noun);
  CHECK(five.action <= one.action);
}

TEST_CASE("edit distance rejects length mismatch") {
  Rng rng(9);
  std::vector<std::vector<Sequence>> c{{random_sequence(rng, 19)}};
  std::vector<Sequence> g{random_sequence(rng, 20)};
  CHECK_THROWS_AS(edit_distance_eval(c, g, 4), InvalidArgument);
  std::vector<Sequence> g2;
  CHECK_THROWS_AS(edit_distance_eval(c, g2, 4), InvalidArgument);
}

TEST_CASE("rollouts have the contract length and K < 1 is rejected") {
  LTAConfig cfg;
  const ActionSequenceModel model(4, 4, cfg);
  Rng rng(10);
  const Sequence history = random_sequence(rng, 8);
  const auto cands = predict_future(history, model, 5, 3);
  REQUIRE(cands.size() == 5);
  for (const auto& c : cands) {
    CHECK(c.size() == 20);
    for (const auto& t : c) {
      CHECK(t.verb_id >= 0);
      CHECK(t.verb_id < 4);
      CHECK(t.noun_id >= 0);
      CHECK(t.noun_id < 4);
    }
  }
  const auto again = predict_future(history, model, 1, 99);
  CHECK(channel(again[0], 2, 4) == channel(cands[0], 2, 4));
  CHECK(channel(predict_future(history, model, 5, 3)[4], 2, 4) == channel(cands[4], 2, 4));
  CHECK_THROWS_AS(predict_future(history, model, 0), InvalidArgument);
  CHECK_THROWS_AS(predict_future(random_sequence(rng, 7), model, 1), InvalidArgument);
}

TEST_CASE("greedy rollout continues the cycle") {
  const auto train = corpus::generate_world(cyclic_world(11, 12));
  const auto test = corpus::generate_world(cyclic_world(12, 4));
  const auto data = examples_from(train.annotations.anticipation);
  REQUIRE(data.size() >= 30);
  std::vector<LTATrainLog> log;
  const auto model = train_sequence_model(ActionSequenceModel(4, 4, fast_config()), data, &log);
  CHECK(log.size() == 30);
  CHECK(log[1].lr == doctest::Approx(3e-3 * 0.85));

  std::vector<std::vector<Sequence>> cands;
  std::vector<Sequence> gt;
  for (const auto& ex : examples_from(test.annotations.anticipation)) {
    // Closed-form continuation: each action id is its predecessor plus one.
    Sequence expect;
    int id = ex.history.back().action_id(4);
    for (int k = 0; k < 20; ++k) {
      id = (id + 1) % 16;
      expect.push_back(ActionToken::from_action_id(id, 4));
    }
    CHECK(channel(expect, 2, 4) == channel(ex.future, 2, 4));
    cands.push_back(predict_future(ex.history, model, 1));
    gt.push_back(expect);
  }
  const auto ed = edit_distance_eval(cands, gt, 4);
  CHECK(ed.verb == 0.0);
  CHECK(ed.noun == 0.0);
  CHECK(ed.action == 0.0);
}

TEST_CASE("training validates examples and epochs 0 copies") {
  LTAConfig cfg;
  cfg.epochs = 0;
  const ActionSequenceModel init(4, 4, cfg);
  Rng rng(13);
  std::vector<LTAExample> data{{"e0", random_sequence(rng, 8), random_sequence(rng, 20)}};
  const auto copy = train_sequence_model(init, data);
  const auto a = init.parameters(), b = copy.parameters();
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].var.value() == b[i].var.value());

  data.push_back({"bad", random_sequence(rng, 8), random_sequence(rng, 19)});
  CHECK_THROWS_AS(train_sequence_model(init, data), InvalidArgument);
  CHECK_THROWS_AS(train_sequence_model(init, std::span<const LTAExample>{}), InvalidArgument);
  cfg.candidates = 0;
  CHECK_THROWS_AS(ActionSequenceModel(4, 4, cfg), InvalidArgument);
}

TEST_CASE("candidate files round trip") {
  Rng rng(14);
  std::vector<CandidateRecord> recs;
  for (int e = 0; e < 3; ++e) {
    recs.push_back({"ex" + std::to_string(e), {random_sequence(rng, 20), random_sequence(rng, 20)}});
  }
  const fs::path path = fs::temp_directory_path() / "egovideo_lta_test" / "cands.jsonl";
  write_candidates(path, recs);
  const auto back = read_candidates(path);
  REQUIRE(back.size() == 3);
  for (size_t e = 0; e < 3; ++e) {
    CHECK(back[e].example_id == recs[e].example_id);
    REQUIRE(back[e].candidates.size() == 2);
    for (size_t k = 0; k < 2; ++k) CHECK(channel(back[e].candidates[k], 2, 4) == channel(recs[e].candidates[k], 2, 4));
  }
  fs::remove_all(path.parent_path());
  CHECK_THROWS_AS(read_candidates(path), MissingDependency);

  const auto cfg = lta_config_from_json(to_json(fast_config()));
  CHECK(cfg.epochs == 30);
  CHECK(cfg.lr == 3e-3);
}
