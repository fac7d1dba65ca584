#include "egovideo/corpus/world.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <cmath>
#include <numbers>

#include "egovideo/common/error.hpp"
#include "egovideo/common/rng.hpp"
#include "egovideo/corpus/filter.hpp"
#include "egovideo/corpus/vocabulary.hpp"

namespace egovideo::corpus {
namespace {

constexpr const char* kQueryTemplate = "C {verb} the {noun}";
constexpr const char* kStepTemplate = "{verb_base} the {noun}";
constexpr const char* kShortNarrationTemplate = "{verb_base} {noun}";

void replace_all(std::string& s, const std::string& from, const std::string& to) {
  for (size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

std::array<double, 3> hsv_to_rgb(double h_deg, double s, double v) {
  h_deg = std::fmod(h_deg, 360.0);
  if (h_deg < 0) h_deg += 360.0;
  const double c = v * s;
  const double hp = h_deg / 60.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  std::array<double, 3> rgb{};
  switch (static_cast<int>(hp)) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  const double m = v - c;
  for (auto& ch : rgb) ch = 255.0 * (ch + m);
  return rgb;
}

Source sample_source(const WorldConfig& config, Rng& rng) {
  if (config.source_probs.empty()) return static_cast<Source>(rng.uniform_int(kNumSources));
  double total = 0.0;
  for (double p : config.source_probs) total += p;
  double u = rng.uniform() * total;
  for (size_t i = 0; i < config.source_probs.size(); ++i) {
    u -= config.source_probs[i];
    if (u < 0.0) return static_cast<Source>(i);
  }
  return static_cast<Source>(config.source_probs.size() - 1);
}

std::string corrupt_caption(const std::string& caption, Rng& rng) {
  switch (rng.uniform_int(3)) {
    case 0:
      return "";
    case 1: {
      auto words = tokenize_words(caption);
      std::vector<size_t> idx(words.size());
      for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      rng.shuffle(idx);
      for (size_t i = 0; i < (words.size() + 1) / 2; ++i) {
        words[idx[i]] = "zz" + std::to_string(rng.uniform_int(1000));
      }
      std::string out;
      for (const auto& w : words) out += (out.empty() ? "" : " ") + w;
      return out;
    }
    default: {
      std::string out = caption;
      for (int i = 0; i < 4; ++i) out += " " + caption;
      return out;
    }
  }
}

ActionScript generate_script(const WorldConfig& config, double duration, Rng& rng) {
  const int num_actions = config.num_verbs * config.num_nouns;
  const int target = config.min_actions + rng.uniform_int(config.max_actions - config.min_actions + 1);
  ActionScript script;
  double t = 0.0;
  int prev = -1;
  for (int k = 0; k < target; ++k) {
    double gap = rng.uniform(0.0, config.max_gap_s);
    double len = rng.uniform(config.min_action_s, config.max_action_s);
    if (t + gap + len > duration) {
      if (k > 0) break;
      gap = 0.0;
      len = std::min(len, duration);
    }
    int action = 0;
    if (prev >= 0 && rng.bernoulli(config.transition_determinism)) {
      action = (prev + 1) % num_actions;
    } else {
      action = rng.uniform_int(num_actions);
    }
    const auto tok = ActionToken::from_action_id(action, config.num_nouns);
    const double start = t + gap;
    script.entries.push_back({tok.verb_id, tok.noun_id, start, start + len});
    t = start + len;
    prev = action;
  }
  return script;
}

}  // namespace

std::string to_string(Source s) {
  switch (s) {
    case Source::kEgo4d: return "ego4d";
    case Source::kHowTo100M: return "howto100m";
    case Source::kEgoExoLearn: return "egoexolearn";
    case Source::kGoalStep: return "goalstep";
  }
  return "ego4d";
}

Source source_from_string(const std::string& name) {
  for (int i = 0; i < kNumSources; ++i) {
    if (to_string(static_cast<Source>(i)) == name) return static_cast<Source>(i);
  }
  throw InvalidArgument("unknown source tag: " + name);
}

FrameView Clip::window(double start_s, double end_s) const {
  const int t_total = video.frames;
  int first = static_cast<int>(std::floor(start_s * fps + 1e-9));
  first = std::clamp(first, 0, std::max(0, t_total - 1));
  int last = static_cast<int>(std::ceil(end_s * fps - 1e-9));
  last = std::clamp(last, first + 1, t_total);
  return video.view().slice(first, last - first);
}

FrameView Clip::entry_view(size_t entry) const {
  if (entry >= script.entries.size()) {
    throw InvalidArgument("clip " + id + " has no entry " + std::to_string(entry));
  }
  const auto& e = script.entries[entry];
  return window(e.start_s, e.end_s);
}

const Clip& World::clip(const std::string& id) const {
  auto it = std::find_if(clips.begin(), clips.end(), [&](const Clip& c) { return c.id == id; });
  if (it == clips.end()) throw InvalidArgument("unknown clip id: " + id);
  return *it;
}

FrameView World::resolve(const std::string& clip_ref) const {
  const auto [id, entry] = split_clip_ref(clip_ref);
  const Clip& c = clip(id);
  return entry ? c.entry_view(*entry) : c.video.view();
}

std::string make_clip_ref(const std::string& clip_id, size_t entry) {
  return clip_id + "#" + std::to_string(entry);
}

std::pair<std::string, std::optional<size_t>> split_clip_ref(const std::string& ref) {
  const auto pos = ref.rfind('#');
  if (pos == std::string::npos) return {ref, std::nullopt};
  return {ref.substr(0, pos), static_cast<size_t>(std::stoul(ref.substr(pos + 1)))};
}

std::string render_caption(const std::string& tmpl, int verb_id, int noun_id) {
  std::string out = tmpl;
  replace_all(out, "{verb_base}", verb_forms()[static_cast<size_t>(verb_id)].second);
  replace_all(out, "{verb}", verb_forms()[static_cast<size_t>(verb_id)].first);
  replace_all(out, "{noun}", noun_names()[static_cast<size_t>(noun_id)]);
  return out;
}

void validate(const WorldConfig& c) {
  require(c.num_clips >= 0, "num_clips must be >= 0");
  require(c.num_verbs >= 2 && c.num_verbs <= kMaxVerbs, "num_verbs must be in [2, 16]");
  require(c.num_nouns >= 2 && c.num_nouns <= kMaxNouns, "num_nouns must be in [2, 16]");
  require(c.fps > 0.0, "fps must be positive");
  require(c.min_action_s > 0.0 && c.min_action_s <= c.max_action_s,
          "action duration range must satisfy 0 < min <= max");
  require(c.min_duration_s > 0.0 && c.min_duration_s <= c.max_duration_s,
          "clip duration range must satisfy 0 < min <= max");
  require(c.min_duration_s >= c.min_action_s,
          "clip duration cannot hold a single action interval");
  require(c.min_actions >= 1 && c.min_actions <= c.max_actions,
          "action count range must satisfy 1 <= min <= max");
  require(c.max_gap_s >= 0.0, "max_gap_s must be >= 0");
  require(c.height > 0 && c.width > 0 && (c.channels == 1 || c.channels == 3),
          "frame shape must be positive with 1 or 3 channels");
  require(!c.caption_templates.empty(), "at least one caption template is required");
  for (const auto& t : c.caption_templates) {
    require(t.find("{noun}") != std::string::npos &&
                (t.find("{verb}") != std::string::npos || t.find("{verb_base}") != std::string::npos),
            "caption template must contain a verb and a {noun} slot: " + t);
  }
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  require(prob(c.caption_corruption_prob) && prob(c.duplicate_prob) &&
              prob(c.transition_determinism),
          "probabilities must lie in [0, 1]");
  require(c.source_probs.empty() || static_cast<int>(c.source_probs.size()) == kNumSources,
          "source_probs must have one entry per source");
  require(c.speed_factor > 0.0, "speed_factor must be positive");
  require(c.lta_history >= 1 && c.lta_future >= 1 && c.lta_stride >= 1,
          "anticipation window sizes must be positive");
}

VideoTensor render_clip(const WorldConfig& config, uint64_t clip_seed,
                        const ActionScript& script, double duration_s) {
  VideoTensor video;
  video.frames = std::max(1, static_cast<int>(std::lround(duration_s * config.fps)));
  video.height = config.height;
  video.width = config.width;
  video.channels = config.channels;
  const size_t frame_size = static_cast<size_t>(config.height * config.width * config.channels);
  video.data.resize(frame_size * static_cast<size_t>(video.frames));

  const double base = 40.0 + static_cast<double>(clip_seed % 41);
  const double two_pi = 2.0 * std::numbers::pi;
  const double cx0 = (config.width - 1) / 2.0;
  const double cy0 = (config.height - 1) / 2.0;

  std::vector<std::array<double, 3>> palette;
  for (int n = 0; n < config.num_nouns; ++n) {
    palette.push_back(hsv_to_rgb(360.0 * n / config.num_nouns + config.hue_shift_deg, 0.85, 0.95));
  }

  size_t entry = 0;
  for (int t = 0; t < video.frames; ++t) {
    const double time = t / config.fps;
    while (entry < script.entries.size() && script.entries[entry].end_s <= time) ++entry;
    const ActionEntry* active = nullptr;
    if (entry < script.entries.size() && script.entries[entry].start_s <= time) {
      active = &script.entries[entry];
    }
    double phase = 0.0, cosphi = 0.0, sinphi = 0.0, bx = 0.0, by = 0.0;
    if (active) {
      phase = (time - active->start_s) * config.speed_factor;
      const double phi = std::numbers::pi * active->verb_id / config.num_verbs;
      const double theta = two_pi * active->verb_id / config.num_verbs;
      cosphi = std::cos(phi);
      sinphi = std::sin(phi);
      const double swing = std::sin(two_pi * 0.5 * phase);
      bx = cx0 + 0.25 * config.width * std::cos(theta) * swing;
      by = cy0 + 0.25 * config.height * std::sin(theta) * swing;
    }
    uint8_t* out = video.data.data() + static_cast<size_t>(t) * frame_size;
    for (int y = 0; y < config.height; ++y) {
      for (int x = 0; x < config.width; ++x) {
        double gray = base;
        bool in_blob = false;
        if (active) {
          gray += 40.0 * std::sin(two_pi * (x * cosphi + y * sinphi) / 4.0 + two_pi * 0.5 * phase);
          in_blob = std::fabs(x - bx) <= 3.0 && std::fabs(y - by) <= 3.0;
        }
        for (int c = 0; c < config.channels; ++c) {
          double value = gray;
          if (in_blob) {
            const auto& rgb = palette[static_cast<size_t>(active->noun_id)];
            value = config.channels == 3 ? rgb[static_cast<size_t>(c)]
                                         : 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
          }
          const uint64_t h = mix_seed(clip_seed, (static_cast<uint64_t>(t) << 32) |
                                                     static_cast<uint64_t>((y * config.width + x) * 4 + c));
          value += static_cast<double>(h % 25) - 12.0;
          *out++ = static_cast<uint8_t>(std::clamp(std::lround(value), 0L, 255L));
        }
      }
    }
  }
  return video;
}

World generate_world(const WorldConfig& config) {
  validate(config);
  World world;
  world.config = config;
  const Vocabulary vocab = Vocabulary::for_world(config);
  auto& ann = world.annotations;

  for (int i = 0; i < config.num_clips; ++i) {
    const uint64_t clip_seed = mix_seed(config.seed, static_cast<uint64_t>(i));
    Rng rng(clip_seed);
    Clip clip;
    char id[32];
    std::snprintf(id, sizeof(id), "%05d", i);
    clip.id = config.id_prefix + id;
    clip.fps = config.fps;
    // Snap the duration to the frame grid so T = round(duration * fps) holds.
    const double raw = rng.uniform(config.min_duration_s, config.max_duration_s);
    clip.duration_s = std::max(1L, std::lround(raw * config.fps)) / config.fps;
    clip.script = generate_script(config, clip.duration_s, rng);
    clip.video = render_clip(config, clip_seed, clip.script, clip.duration_s);

    Rng pair_rng(mix_seed(clip_seed, 0x7061697273ULL));
    const auto& entries = clip.script.entries;
    for (size_t k = 0; k < entries.size(); ++k) {
      const auto& e = entries[k];
      const auto& tmpl = config.caption_templates[static_cast<size_t>(
          pair_rng.uniform_int(static_cast<int>(config.caption_templates.size())))];
      ClipTextPair pair{make_clip_ref(clip.id, k), render_caption(tmpl, e.verb_id, e.noun_id),
                        sample_source(config, pair_rng), 0.0};
      if (pair_rng.bernoulli(config.caption_corruption_prob)) {
        pair.caption = corrupt_caption(pair.caption, pair_rng);
      }
      world.pairs.push_back(pair);
      if (pair_rng.bernoulli(config.duplicate_prob)) world.pairs.push_back(pair);

      ann.recognition.push_back({make_clip_ref(clip.id, k), clip.id, e.start_s, e.end_s, e.verb_id,
                                 e.noun_id, render_caption(kShortNarrationTemplate, e.verb_id, e.noun_id)});
    }

    // Grounding queries only for actions that occur once in the clip, so the
    // answer window is unambiguous.
    for (size_t k = 0; k < entries.size(); ++k) {
      const auto& e = entries[k];
      const auto same = std::count_if(entries.begin(), entries.end(), [&](const ActionEntry& o) {
        return o.verb_id == e.verb_id && o.noun_id == e.noun_id;
      });
      if (same != 1) continue;
      const TemporalSegment gt{e.start_s, e.end_s, 1.0, std::nullopt};
      ann.nlq.push_back({clip.id + "_q" + std::to_string(k), clip.id,
                         render_caption(kQueryTemplate, e.verb_id, e.noun_id), gt, e.verb_id,
                         e.noun_id});
      ann.goalstep.push_back({clip.id + "_s" + std::to_string(k), clip.id,
                              render_caption(kStepTemplate, e.verb_id, e.noun_id), gt, e.verb_id,
                              e.noun_id});
    }

    std::map<int, MomentAnnotation> moments;
    for (const auto& e : entries) {
      const int cat = e.verb_id * config.num_nouns + e.noun_id;
      auto& m = moments[cat];
      m.clip_id = clip.id;
      m.category_id = cat;
      m.segments.push_back({e.start_s, e.end_s, 1.0, cat});
    }
    for (auto& [cat, m] : moments) ann.moments.push_back(std::move(m));

    const int window = config.lta_history + config.lta_future;
    for (int start = 0; start + window <= static_cast<int>(entries.size()); start += config.lta_stride) {
      AnticipationAnnotation ex;
      ex.example_id = clip.id + "_a" + std::to_string(start);
      ex.clip_id = clip.id;
      for (int k = 0; k < window; ++k) {
        const auto& e = entries[static_cast<size_t>(start + k)];
        if (k < config.lta_history) {
          ex.history.push_back({e.verb_id, e.noun_id});
          ex.history_segments.push_back({e.start_s, e.end_s, 1.0, std::nullopt});
        } else {
          ex.future.push_back({e.verb_id, e.noun_id});
        }
      }
      ann.anticipation.push_back(std::move(ex));
    }

    world.clips.push_back(std::move(clip));
  }

  FilterRules rules = FilterRules::for_vocabulary(vocab);
  const auto qualities = score_pairs(world.pairs, rules);
  for (size_t i = 0; i < world.pairs.size(); ++i) world.pairs[i].quality = qualities[i];
  return world;
}

}  // namespace egovideo::corpus
