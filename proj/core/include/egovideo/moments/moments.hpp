#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "egovideo/common/jsonl.hpp"
#include "egovideo/grounding/grounding.hpp"

namespace egovideo::moments {

using grounding::Anchor;
using grounding::TrackIndex;
using nn::Matrix;
using nn::Var;

struct MomentConfig {
  int num_categories = 16;
  int levels = 3;
  int width = 32;
  int heads = 2;
  int blocks_per_level = 1;
  // Learned per-position significance gate; when false every weight is 1.
  bool use_gate = true;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double reg_weight = 1.0;
  double gate_weight = 1.0;
  double nms_sigma = 0.5;
  double score_floor = 1e-3;
  int max_per_category = 20;
  int batch_size = 4;
  int epochs = 30;
  int warmup_epochs = 2;
  double lr = 1e-3;
  double weight_decay = 0.05;
  double dropout = 0.0;
  uint64_t seed = 0;
};

void validate(const MomentConfig& config);
io::Json to_json(const MomentConfig& config);
MomentConfig moment_config_from_json(const io::Json& j, MomentConfig base = {});

// Raw head outputs for one clip plus the exhaustive decoded candidates.
struct DetectionOutput {
  std::string clip_id;
  double duration_s = 0.0;
  std::vector<Anchor> anchors;
  Matrix logits;        // P x C
  Matrix offsets;       // P x 2, level units
  Matrix gate_logits;   // P x 1; empty means weight 1 everywhere
  // candidates[c]: every anchor decoded for category c, score descending.
  std::vector<std::vector<TemporalSegment>> candidates;
};

// Fills out.candidates from logits, offsets and gate.
void decode_candidates(DetectionOutput& out);

class MomentModel {
 public:
  MomentModel() = default;
  MomentModel(int feature_dim, MomentConfig config);

  MomentModel clone() const;

  struct Heads {
    Var logits;
    Var offsets;
    Var gate_logits;  // undefined when the gate is disabled
    std::vector<Anchor> anchors;
  };
  Heads forward(const features::SnippetFeatureTrack& track, const nn::ForwardContext& ctx = {}) const;

  void zero_regression_head() const;
  nn::ParamList parameters() const;
  const MomentConfig& config() const { return config_; }
  int feature_dim() const { return feature_dim_; }

 private:
  int feature_dim_ = 0;
  MomentConfig config_;
  grounding::TemporalPyramidEncoder pyramid_;
  nn::Mlp cls_head_;
  nn::Linear reg_hidden_;
  nn::Linear reg_out_;
  nn::Linear gate_head_;
};

DetectionOutput detect_moments(const features::SnippetFeatureTrack& track, const MomentModel& model);

// Gaussian soft-NMS. Repeatedly selects the highest remaining score (earliest
// input on ties), decays the rest by exp(-tIoU^2 / sigma) against it and drops
// any that fall below score_floor.
std::vector<TemporalSegment> soft_nms(std::vector<TemporalSegment> candidates, double sigma, double score_floor);

struct MomentPrediction {
  std::string clip_id;
  int category_id = 0;
  std::vector<TemporalSegment> segments;
};

// soft_nms per category, keeping at most max_per_category; empty categories
// are omitted.
std::vector<MomentPrediction> postprocess(const DetectionOutput& out, double sigma, double score_floor,
                                          int max_per_category);

// Elementwise mean of logits, offsets and gate logits, then decode.
DetectionOutput ensemble_detections(std::span<const DetectionOutput> outputs);

struct MomentTrainLog {
  int epoch = 0;
  double mean_loss = 0.0;
};

MomentModel train_moments(const MomentModel& init, std::span<const corpus::MomentAnnotation> annotations,
                          const TrackIndex& tracks, std::vector<MomentTrainLog>* log = nullptr);

inline constexpr std::array<double, 5> kDefaultTious{0.1, 0.2, 0.3, 0.4, 0.5};

struct MapResult {
  std::vector<double> tious;
  std::vector<double> map_per_tiou;
  double average_map = 0.0;
  double recall_1x_at_05 = 0.0;
  int unknown_category_predictions = 0;
};

// Per category and threshold, predictions pooled over clips are walked by
// descending score (stable) and each claims the best-overlapping unclaimed gt
// of its clip. AP = sum of precision at each hit / number of gt instances.
// mAP averages categories that have gt. Recall@1x at 0.5 takes, for every
// (clip, category), the top n predictions where n is its gt count.
MapResult average_map(std::span<const MomentPrediction> predictions, std::span<const corpus::MomentAnnotation> gt,
                      int num_categories, std::span<const double> tious = kDefaultTious);

void write_predictions(const std::filesystem::path& path, std::span<const MomentPrediction> predictions);
std::vector<MomentPrediction> read_predictions(const std::filesystem::path& path);

// Raw detection outputs for later logit ensembling.
void write_detections(const std::filesystem::path& path, std::span<const DetectionOutput> outputs);
std::vector<DetectionOutput> read_detections(const std::filesystem::path& path);

}  // namespace egovideo::moments
