#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "egovideo/metrics/segment.hpp"

namespace egovideo::corpus {

struct ActionEntry {
  int verb_id = 0;
  int noun_id = 0;
  double start_s = 0.0;
  double end_s = 0.0;
};

// Ordered by start_s; every entry lies inside [0, clip duration].
struct ActionScript {
  std::vector<ActionEntry> entries;
};

struct ActionToken {
  int verb_id = 0;
  int noun_id = 0;

  int action_id(int num_nouns) const { return verb_id * num_nouns + noun_id; }
  static ActionToken from_action_id(int action_id, int num_nouns) {
    return {action_id / num_nouns, action_id % num_nouns};
  }
  friend bool operator==(const ActionToken&, const ActionToken&) = default;
};

// Non-owning view of T consecutive H x W x C frames.
struct FrameView {
  std::span<const uint8_t> data;
  int frames = 0;
  int height = 0;
  int width = 0;
  int channels = 0;

  size_t frame_size() const {
    return static_cast<size_t>(height) * static_cast<size_t>(width) * static_cast<size_t>(channels);
  }
  std::span<const uint8_t> frame(int t) const {
    return data.subspan(static_cast<size_t>(t) * frame_size(), frame_size());
  }
  FrameView slice(int first, int count) const {
    return {data.subspan(static_cast<size_t>(first) * frame_size(),
                         static_cast<size_t>(count) * frame_size()),
            count, height, width, channels};
  }
};

// T x H x W x C unsigned 8-bit frames, row-major.
struct VideoTensor {
  int frames = 0;
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<uint8_t> data;

  FrameView view() const { return {data, frames, height, width, channels}; }
  friend bool operator==(const VideoTensor&, const VideoTensor&) = default;
};

struct Clip {
  std::string id;
  VideoTensor video;
  double fps = 0.0;
  double duration_s = 0.0;
  ActionScript script;

  // Frames covering [start_s, end_s); at least one frame.
  FrameView window(double start_s, double end_s) const;
  FrameView entry_view(size_t entry) const;
};

enum class Source { kEgo4d, kHowTo100M, kEgoExoLearn, kGoalStep };
inline constexpr int kNumSources = 4;

std::string to_string(Source s);
Source source_from_string(const std::string& name);

struct ClipTextPair {
  std::string clip_id;  // "<clip id>#<entry index>"
  std::string caption;
  Source source = Source::kEgo4d;
  double quality = 0.0;

  friend bool operator==(const ClipTextPair&, const ClipTextPair&) = default;
};

struct WorldConfig {
  uint64_t seed = 0;
  int num_clips = 0;
  int num_verbs = 4;
  int num_nouns = 4;
  double fps = 8.0;
  double min_duration_s = 3.0;
  double max_duration_s = 5.0;
  int min_actions = 1;
  int max_actions = 1;
  double min_action_s = 2.0;
  double max_action_s = 4.0;
  double max_gap_s = 0.5;
  int height = 16;
  int width = 16;
  int channels = 3;
  // {verb} renders the third-person form ("cuts"), {verb_base} the base form
  // ("cut"), {noun} the object.
  std::vector<std::string> caption_templates = {"C {verb} the {noun}", "C {verb} a {noun}"};
  double caption_corruption_prob = 0.0;
  double duplicate_prob = 0.0;
  // Probability that the next action is the cyclic successor of the current
  // one; otherwise it is drawn uniformly.
  double transition_determinism = 0.0;
  // Domain-shift knobs applied at render time.
  double hue_shift_deg = 0.0;
  double speed_factor = 1.0;
  // Relative frequency of each Source tag; empty means uniform.
  std::vector<double> source_probs;
  int lta_history = 8;
  int lta_future = 20;
  int lta_stride = 4;
  std::string id_prefix = "clip";
};

// Throws InvalidArgument when the configuration is unusable.
void validate(const WorldConfig& config);

struct GroundingAnnotation {
  std::string query_id;
  std::string clip_id;
  std::string query_text;
  TemporalSegment gt;
  int verb_id = 0;
  int noun_id = 0;
};

struct MomentAnnotation {
  std::string clip_id;
  int category_id = 0;
  std::vector<TemporalSegment> segments;
};

struct AnticipationAnnotation {
  std::string example_id;
  std::string clip_id;
  std::vector<ActionToken> history;
  std::vector<ActionToken> future;
  std::vector<TemporalSegment> history_segments;
};

struct RecognitionAnnotation {
  std::string clip_ref;  // "<clip id>#<entry index>"
  std::string clip_id;
  double start_s = 0.0;
  double end_s = 0.0;
  int verb_id = 0;
  int noun_id = 0;
  std::string caption;  // short "verb noun" narration
};

struct Annotations {
  std::vector<GroundingAnnotation> nlq;
  std::vector<GroundingAnnotation> goalstep;
  std::vector<MomentAnnotation> moments;
  std::vector<AnticipationAnnotation> anticipation;
  std::vector<RecognitionAnnotation> recognition;
};

struct World {
  WorldConfig config;
  std::vector<Clip> clips;
  std::vector<ClipTextPair> pairs;
  Annotations annotations;

  const Clip& clip(const std::string& id) const;
  // Resolves "<clip id>#<entry>" (or a bare clip id) to a frame view.
  FrameView resolve(const std::string& clip_ref) const;
  int num_categories() const { return config.num_verbs * config.num_nouns; }
};

World generate_world(const WorldConfig& config);

// Renders clip frames from a script; exposed so tests can re-render a clip
// and compare.
VideoTensor render_clip(const WorldConfig& config, uint64_t clip_seed,
                        const ActionScript& script, double duration_s);

std::string make_clip_ref(const std::string& clip_id, size_t entry);
// Splits "<clip id>#<entry>"; entry is empty for bare ids.
std::pair<std::string, std::optional<size_t>> split_clip_ref(const std::string& ref);

std::string render_caption(const std::string& tmpl, int verb_id, int noun_id);

}  // namespace egovideo::corpus
