#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "egovideo/common/jsonl.hpp"
#include "egovideo/encoders/model.hpp"
#include "egovideo/features/features.hpp"

namespace egovideo::grounding {

using nn::Matrix;
using nn::Var;
using features::SnippetFeatureTrack;

// ---- pyramid geometry -----------------------------------------------------

struct PyramidLevel {
  Matrix features;
  std::vector<double> stamps_s;
  double unit_s = 0.0;  // seconds per position at this level
};

// ceil(n/2) x n averaging matrix: row j averages inputs 2j and 2j+1 (or 2j
// alone at an odd tail).
Matrix downsample_matrix(int n);

// Level 0 is the track itself; level l halves level l-1 with stride 2.
std::vector<PyramidLevel> build_pyramid(const SnippetFeatureTrack& track, int levels);

struct Anchor {
  int level = 0;
  int position = 0;
  double center_s = 0.0;
  double unit_s = 0.0;
};

// All pyramid positions, level-major.
std::vector<Anchor> pyramid_anchors(const SnippetFeatureTrack& track, int levels);

// Segment [c - left*unit, c + right*unit] clipped to [0, duration].
TemporalSegment decode_offsets(const Anchor& a, double left, double right, double duration_s);

// Transformer encoder shared by the grounding and moment heads: an input
// projection, then per-level self-attention (and optional cross-attention to a
// context sequence) with stride-2 average pooling between levels. Returns the
// concatenated level-major P x width states.
class TemporalPyramidEncoder {
 public:
  TemporalPyramidEncoder() = default;
  TemporalPyramidEncoder(int in_dim, int width, int heads, int levels, int blocks_per_level, int context_dim,
                         Rng& rng);

  Var forward(const Var& x, const Var& input_bias, const Var& context, const nn::ForwardContext& ctx) const;
  void collect(const std::string& prefix, nn::ParamList& out) const;
  int levels() const { return levels_; }
  int width() const { return width_; }

 private:
  int levels_ = 1;
  int width_ = 0;
  nn::Linear in_proj_;
  nn::Linear context_proj_;
  std::vector<std::vector<nn::SelfAttentionBlock>> blocks_;
  std::vector<nn::CrossAttentionBlock> cross_;
  nn::LayerNorm out_norm_;
};

// ---- configuration ----------------------------------------------------------

struct PhaseConfig {
  int batch_size = 2;
  int epochs = 10;
  int warmup_epochs = 4;
  double max_lr = 5e-5;
};

struct GroundingConfig {
  int levels = 3;
  int width = 32;
  int heads = 2;
  int blocks_per_level = 1;
  // Cross-attention from video positions to query tokens inside the encoder.
  bool cross_modal = false;
  int top_k = 5;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double reg_weight = 1.0;
  double dropout = 0.0;
  double drop_path = 0.0;
  double weight_decay = 0.05;
  PhaseConfig pretrain{8, 10, 4, 2e-4};
  PhaseConfig finetune{2, 10, 4, 5e-5};
  // Size of the synthetic narration-query set relative to the finetune set.
  int pretrain_multiplier = 5;
  uint64_t seed = 0;
};

void validate(const GroundingConfig& config);
GroundingConfig with_step_overrides(GroundingConfig config);
io::Json to_json(const GroundingConfig& config);
GroundingConfig grounding_config_from_json(const io::Json& j, GroundingConfig base = {});

// ---- model ------------------------------------------------------------------

struct GroundingQuery {
  std::string query_id;
  std::string clip_id;
  std::string query_text;
  TemporalSegment gt;
};

std::vector<GroundingQuery> queries_from(std::span<const corpus::GroundingAnnotation> annotations);

// Auto-generated narration queries over random script entries; ids "naq<i>".
std::vector<GroundingQuery> synthesize_pretrain_queries(const corpus::World& world, int count, uint64_t seed);

using TrackIndex = std::map<std::string, SnippetFeatureTrack>;
TrackIndex index_tracks(std::vector<SnippetFeatureTrack> tracks);

class GroundingModel {
 public:
  GroundingModel() = default;
  // The text tower of `encoder` is kept frozen to embed queries. The video
  // input width is feature_dim; when it equals the text embedding width a
  // query-similarity channel is appended to every position.
  GroundingModel(const encoders::TwoTowerModel& encoder, int feature_dim, GroundingConfig config);

  GroundingModel clone() const;

  struct QueryFeatures {
    Matrix embed;   // 1 x D
    Matrix tokens;  // n x text width
  };
  QueryFeatures encode_query(const std::string& text) const;

  struct Output {
    Var logits;   // P x 1
    Var offsets;  // P x 2, nonnegative, in units of the anchor's level
    std::vector<Anchor> anchors;
  };
  Output forward(const SnippetFeatureTrack& track, const QueryFeatures& query,
                 const nn::ForwardContext& ctx = {}) const;

  void zero_regression_head() const;
  nn::ParamList parameters() const;
  const GroundingConfig& config() const { return config_; }
  int feature_dim() const { return feature_dim_; }

 private:
  encoders::TwoTowerModel encoder_;
  int feature_dim_ = 0;
  GroundingConfig config_;
  bool similarity_channel_ = false;
  nn::Linear query_proj_;  // query embedding added to every position
  TemporalPyramidEncoder pyramid_;
  nn::Mlp cls_head_;
  nn::Linear reg_hidden_;
  nn::Linear reg_out_;
};

// Scores descending; ties keep (level, position) order. At most top_k.
std::vector<TemporalSegment> decode(const GroundingModel::Output& out, double duration_s, int top_k);
std::vector<TemporalSegment> ground_query(const SnippetFeatureTrack& track, const std::string& query_text,
                                          const GroundingModel& model);

struct GroundingTrainLog {
  std::string phase;
  int epoch = 0;
  double mean_loss = 0.0;
};

// Pretrain phase on `pretrain` (skipped when empty), then finetune phase.
GroundingModel train_grounding(const GroundingModel& init, std::span<const GroundingQuery> pretrain,
                               std::span<const GroundingQuery> finetune, const TrackIndex& tracks,
                               std::vector<GroundingTrainLog>* log = nullptr);

// ---- evaluation -------------------------------------------------------------

using GroundingPredictions = std::map<std::string, std::vector<TemporalSegment>>;

GroundingPredictions predict_queries(const GroundingModel& model, std::span<const GroundingQuery> queries,
                                     const TrackIndex& tracks);

inline constexpr std::array<int, 2> kDefaultKs{1, 5};
inline constexpr std::array<double, 2> kDefaultTious{0.3, 0.5};

struct RecallTable {
  std::vector<int> ks;
  std::vector<double> tious;
  std::map<std::pair<int, double>, double> cells;
  int num_queries = 0;
  int missing = 0;

  double at(int k, double tiou) const { return cells.at({k, tiou}); }
};

// R_k@t over gt queries; predictions are ranked by score (stable), and a query
// absent from predictions counts as a miss.
RecallTable eval_grounding(const GroundingPredictions& predictions, std::span<const GroundingQuery> gt,
                           std::span<const int> ks = kDefaultKs, std::span<const double> tious = kDefaultTious);

void write_predictions(const std::filesystem::path& path, const GroundingPredictions& predictions);
// Rejects segments with start > end or negative start.
GroundingPredictions read_predictions(const std::filesystem::path& path);

}  // namespace egovideo::grounding
