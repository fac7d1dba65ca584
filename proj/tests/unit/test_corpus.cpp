#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "egovideo/common/error.hpp"
#include "egovideo/common/rng.hpp"
#include "egovideo/corpus/filter.hpp"
#include "egovideo/corpus/io.hpp"
#include "egovideo/corpus/vocabulary.hpp"
#include "egovideo/corpus/world.hpp"

using namespace egovideo;
using namespace egovideo::corpus;
namespace fs = std::filesystem;

namespace {

WorldConfig small_config(int clips, uint64_t seed = 7) {
  WorldConfig c;
  c.seed = seed;
  c.num_clips = clips;
  c.num_verbs = 3;
  c.num_nouns = 3;
  c.min_actions = 1;
  c.max_actions = 3;
  c.min_duration_s = 4.0;
  c.max_duration_s = 8.0;
  c.min_action_s = 1.0;
  c.max_action_s = 2.5;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("egovideo_corpus_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("generate_world is deterministic down to the bytes") {
  auto cfg = small_config(6);
  cfg.caption_corruption_prob = 0.3;
  cfg.duplicate_prob = 0.3;
  auto a = scratch("det_a"), b = scratch("det_b");
  const auto files = write_world(a, generate_world(cfg));
  write_world(b, generate_world(cfg));
  for (const auto& rel : files) CHECK(slurp(a / rel) == slurp(b / rel));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("empty world") {
  auto w = generate_world(small_config(0));
  CHECK(w.clips.empty());
  CHECK(w.pairs.empty());
  CHECK(w.annotations.nlq.empty());
  CHECK(w.annotations.moments.empty());
  CHECK(w.annotations.anticipation.empty());
}

TEST_CASE("config that cannot hold an action is rejected") {
  auto cfg = small_config(1);
  cfg.min_duration_s = 0.5;
  cfg.min_action_s = 1.0;
  CHECK_THROWS_AS(generate_world(cfg), InvalidArgument);
  cfg = small_config(1);
  cfg.num_verbs = 1;
  CHECK_THROWS_AS(generate_world(cfg), InvalidArgument);
}

TEST_CASE("clip and script invariants hold") {
  const auto w = generate_world(small_config(40));
  for (const auto& c : w.clips) {
    CHECK(c.video.frames == std::lround(c.duration_s * c.fps));
    CHECK(c.video.height == 16);
    CHECK(c.video.data.size() == static_cast<size_t>(c.video.frames) * 16 * 16 * 3);
    double prev = -1.0;
    for (const auto& e : c.script.entries) {
      CHECK(0.0 <= e.start_s);
      CHECK(e.start_s < e.end_s);
      CHECK(e.end_s <= c.duration_s + 1e-12);
      CHECK(e.start_s >= prev);
      prev = e.start_s;
    }
    CHECK(render_clip(w.config, mix_seed(w.config.seed, std::stoul(c.id.substr(4))), c.script,
                      c.duration_s) == c.video);
  }
}

TEST_CASE("frames differ between actions and match between repeats") {
  auto cfg = small_config(30);
  cfg.max_actions = 1;
  const auto w = generate_world(cfg);
  // Average absolute pixel difference between first frames of two clips'
  // actions; same action should be closer than different action on average.
  auto frame_of = [&](const Clip& c) {
    return c.entry_view(0).frame(2);
  };
  double same = 0, diff = 0;
  int ns = 0, nd = 0;
  for (size_t i = 0; i < w.clips.size(); ++i) {
    for (size_t j = i + 1; j < w.clips.size(); ++j) {
      const auto& ei = w.clips[i].script.entries[0];
      const auto& ej = w.clips[j].script.entries[0];
      auto fi = frame_of(w.clips[i]), fj = frame_of(w.clips[j]);
      double d = 0;
      for (size_t k = 0; k < fi.size(); ++k) d += std::abs(int(fi[k]) - int(fj[k]));
      if (ei.verb_id == ej.verb_id && ei.noun_id == ej.noun_id) {
        same += d;
        ++ns;
      } else {
        diff += d;
        ++nd;
      }
    }
  }
  REQUIRE(ns > 0);
  CHECK(same / ns < diff / nd);
}

TEST_CASE("captions name exactly the verb and noun of their script entry") {
  auto cfg = small_config(100);
  const auto w = generate_world(cfg);
  const auto vocab = Vocabulary::for_world(cfg);
  REQUIRE(!w.pairs.empty());
  for (const auto& p : w.pairs) {
    const auto [clip_id, entry] = split_clip_ref(p.clip_id);
    REQUIRE(entry.has_value());
    const auto& e = w.clip(clip_id).script.entries.at(*entry);
    // independent scan of the caption words against the raw word lists
    std::set<int> verbs, nouns;
    std::istringstream words(p.caption);
    std::string word;
    while (words >> word) {
      for (int v = 0; v < cfg.num_verbs; ++v) {
        if (word == verb_forms()[v].first || word == verb_forms()[v].second) verbs.insert(v);
      }
      for (int n = 0; n < cfg.num_nouns; ++n) {
        if (word == noun_names()[n]) nouns.insert(n);
      }
    }
    CHECK(verbs == std::set<int>{e.verb_id});
    CHECK(nouns == std::set<int>{e.noun_id});
  }
}

TEST_CASE("every annotation references an existing clip with in-range labels") {
  auto cfg = small_config(30);
  cfg.max_actions = 12;
  cfg.max_duration_s = 30.0;
  cfg.min_duration_s = 20.0;
  cfg.lta_history = 3;
  cfg.lta_future = 4;
  cfg.lta_stride = 2;
  const auto w = generate_world(cfg);
  std::set<std::string> ids;
  for (const auto& c : w.clips) ids.insert(c.id);
  for (const auto* track : {&w.annotations.nlq, &w.annotations.goalstep}) {
    for (const auto& q : *track) {
      REQUIRE(ids.contains(q.clip_id));
      CHECK(q.gt.valid());
      CHECK(q.gt.end_s <= w.clip(q.clip_id).duration_s + 1e-12);
      CHECK(q.verb_id < cfg.num_verbs);
      CHECK(q.noun_id < cfg.num_nouns);
    }
  }
  for (const auto& m : w.annotations.moments) {
    REQUIRE(ids.contains(m.clip_id));
    CHECK(m.category_id >= 0);
    CHECK(m.category_id < w.num_categories());
  }
  REQUIRE(!w.annotations.anticipation.empty());
  for (const auto& a : w.annotations.anticipation) {
    REQUIRE(ids.contains(a.clip_id));
    CHECK(a.history.size() == 3);
    CHECK(a.future.size() == 4);
  }
  for (const auto& r : w.annotations.recognition) {
    REQUIRE(ids.contains(r.clip_id));
    CHECK_NOTHROW(w.resolve(r.clip_ref));
  }
}

TEST_CASE("cyclic worlds follow the successor rule") {
  auto cfg = small_config(5);
  cfg.transition_determinism = 1.0;
  cfg.max_actions = 10;
  cfg.min_duration_s = cfg.max_duration_s = 25.0;
  const auto w = generate_world(cfg);
  const int a_count = cfg.num_verbs * cfg.num_nouns;
  for (const auto& c : w.clips) {
    const auto& e = c.script.entries;
    for (size_t k = 1; k < e.size(); ++k) {
      const int prev = e[k - 1].verb_id * cfg.num_nouns + e[k - 1].noun_id;
      CHECK(e[k].verb_id * cfg.num_nouns + e[k].noun_id == (prev + 1) % a_count);
    }
  }
}

TEST_CASE("vocabulary tokenization matches a hand-built table") {
  WorldConfig cfg;
  cfg.num_verbs = 2;
  cfg.num_nouns = 2;
  const auto vocab = Vocabulary::for_world(cfg);
  // [pad] [unk] c the a | cuts washes | cut wash | tomato onion
  CHECK(vocab.size() == 11);
  CHECK(vocab.encode("C cuts the tomato", 6) == std::vector<int>{2, 5, 3, 9, 0, 0});
  CHECK(vocab.encode("C peels the tomato", 4) == std::vector<int>{2, 1, 3, 9});
  CHECK(vocab.encode("", 3) == std::vector<int>{0, 0, 0});
  const auto parsed = vocab.parse("wash the onion");
  CHECK(parsed.verbs == std::set<int>{1});
  CHECK(parsed.nouns == std::set<int>{1});
}

TEST_CASE("score_pair rules") {
  WorldConfig cfg;
  const auto vocab = Vocabulary::for_world(cfg);
  auto rules = FilterRules::for_vocabulary(vocab);
  CHECK(score_pair({"x#0", "", Source::kEgo4d, 0}, rules) == 0.0);
  CHECK(score_pair({"x#0", "C cuts the tomato", Source::kEgo4d, 0}, rules) == 1.0);

  rules.vocab_weight = 0.6;
  rules.min_vocab_fraction = 0.25;
  const std::string caption = "C cuts zz1 zz2";
  // two of four tokens known
  const double expected = (1.0 - 0.6) + 0.6 * (2.0 / 4.0);
  CHECK(score_pair({"x#0", caption, Source::kEgo4d, 0}, rules) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(score_pair({"x#0", caption, Source::kEgo4d, 0}, rules, true) ==
        doctest::Approx(expected * 0.5).epsilon(1e-15));
  CHECK(score_pair({"x#0", "zz1 zz2 zz3 zz4 zz5 c", Source::kEgo4d, 0}, rules) == 0.0);
  std::string long_caption;
  for (int i = 0; i < 17; ++i) long_caption += "the ";
  CHECK(score_pair({"x#0", long_caption, Source::kEgo4d, 0}, rules) == 0.0);
}

TEST_CASE("select_corpus no-op filter preserves order") {
  std::vector<ClipTextPair> pairs;
  for (int i = 0; i < 12; ++i) {
    pairs.push_back({"c" + std::to_string(i) + "#0", "C cuts the tomato", static_cast<Source>(i % 4), 0.5});
  }
  SelectionOptions opt;
  opt.threshold = 0.0;
  for (int s = 0; s < kNumSources; ++s) opt.mix_weights[static_cast<Source>(s)] = 1.0;
  CHECK(select_corpus(pairs, opt) == pairs);
  opt.mix_weights.clear();
  CHECK(select_corpus(pairs, opt) == pairs);
}

TEST_CASE("select_corpus with an impossible threshold reports an empty corpus") {
  std::vector<ClipTextPair> pairs = {{"c#0", "C cuts the tomato", Source::kEgo4d, 1.0}};
  SelectionOptions opt;
  opt.threshold = 1.1;
  try {
    select_corpus(pairs, opt);
    FAIL("expected an error");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("empty corpus") != std::string::npos);
  }
  opt.require_nonempty = false;
  CHECK(select_corpus(pairs, opt).empty());
}

TEST_CASE("injected duplicates are removed") {
  auto cfg = small_config(80);
  cfg.duplicate_prob = 0.2;
  const auto w = generate_world(cfg);
  int injected = 0;
  for (size_t i = 1; i < w.pairs.size(); ++i) injected += w.pairs[i] == ClipTextPair{w.pairs[i - 1].clip_id, w.pairs[i - 1].caption, w.pairs[i].source, w.pairs[i].quality} ? 1 : 0;
  CHECK(injected > 0);
  SelectionOptions opt;
  const auto out = select_corpus(w.pairs, opt);
  int dups = 0;
  for (size_t i = 0; i < out.size(); ++i) {
    for (size_t j = i + 1; j < out.size(); ++j) {
      dups += (out[i].clip_id == out[j].clip_id && out[i].caption == out[j].caption) ? 1 : 0;
    }
  }
  CHECK(dups == 0);
}

TEST_CASE("selection properties: determinism, monotonicity, idempotence, proportions") {
  auto cfg = small_config(120, 99);
  cfg.caption_corruption_prob = 0.3;
  cfg.duplicate_prob = 0.2;
  const auto w = generate_world(cfg);
  SelectionOptions opt;
  opt.seed = 5;
  opt.require_nonempty = false;
  opt.mix_weights = {{Source::kEgo4d, 0.5}, {Source::kHowTo100M, 0.25}, {Source::kGoalStep, 0.25}};
  size_t prev = SIZE_MAX;
  for (double t : {0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.1}) {
    opt.threshold = t;
    const auto once = select_corpus(w.pairs, opt);
    CHECK(once == select_corpus(w.pairs, opt));
    CHECK(once.size() <= prev);
    prev = once.size();
    for (const auto& p : once) CHECK(p.quality >= t);
    CHECK(select_corpus(once, opt) == once);
    if (once.size() >= 8) {
      std::map<Source, int> count;
      for (const auto& p : once) ++count[p.source];
      CHECK(count[Source::kEgoExoLearn] == 0);
      CHECK(std::abs(count[Source::kEgo4d] - 2 * count[Source::kHowTo100M]) <= 2);
      CHECK(std::abs(count[Source::kHowTo100M] - count[Source::kGoalStep]) <= 1);
    }
  }
}

TEST_CASE("world directory round trip") {
  auto cfg = small_config(5);
  cfg.max_actions = 10;
  cfg.min_duration_s = cfg.max_duration_s = 25.0;
  cfg.lta_history = 2;
  cfg.lta_future = 3;
  const auto w = generate_world(cfg);
  const auto dir = scratch("rt");
  const auto files = write_world(dir, w);
  for (const auto& f : files) CHECK(fs::exists(dir / f));
  const auto back = read_world(dir);
  CHECK(back.pairs == w.pairs);
  REQUIRE(back.clips.size() == w.clips.size());
  for (size_t i = 0; i < w.clips.size(); ++i) {
    CHECK(back.clips[i].video == w.clips[i].video);
    CHECK(back.clips[i].script.entries.size() == w.clips[i].script.entries.size());
  }
  CHECK(back.annotations.anticipation.size() == w.annotations.anticipation.size());
  CHECK(back.annotations.nlq.size() == w.annotations.nlq.size());
  CHECK(to_json(back.config) == to_json(w.config));
  fs::remove_all(dir);
}

TEST_CASE("malformed clip files are rejected") {
  const auto dir = scratch("bad");
  fs::create_directories(dir);
  std::ofstream(dir / "x.egvc", std::ios::binary) << "EGVX";
  CHECK_THROWS(read_clip_file(dir / "x.egvc"));
  fs::remove_all(dir);
}
