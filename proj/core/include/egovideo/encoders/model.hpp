#pragma once

#include <span>
#include <string>
#include <vector>

#include "egovideo/common/jsonl.hpp"
#include "egovideo/corpus/vocabulary.hpp"
#include "egovideo/corpus/world.hpp"
#include "egovideo/nn/layers.hpp"

namespace egovideo::encoders {

using nn::Matrix;
using nn::Var;

struct EncoderConfig {
  int embed_dim = 32;
  int width = 32;
  int heads = 2;
  // Video tower.
  int height = 16;
  int width_px = 16;
  int channels = 3;
  int patch_size = 4;
  int sampled_frames = 4;
  int spatial_depth = 1;
  int temporal_depth = 1;
  // Text tower.
  int max_text_len = 16;
  int text_depth = 2;
  double temperature = 0.07;
  bool learnable_temperature = true;
  // Recorded for parity with large-scale runs; CPU builds compute in double.
  bool bf16 = false;

  int patches_per_frame() const { return (height / patch_size) * (width_px / patch_size); }
  int patch_dim() const { return patch_size * patch_size * channels; }
};

void validate(const EncoderConfig& config);
io::Json to_json(const EncoderConfig& config);
EncoderConfig encoder_config_from_json(const io::Json& j, EncoderConfig base = {});

inline constexpr double kMinTemperature = 1e-3;
inline constexpr double kMaxTemperature = 1.0;

// Uniformly spaced frame indices (centers of F equal bins over T frames).
std::vector<int> sample_frame_indices(int total_frames, int count);

// B*F*P x (p*p*C) matrix of patches scaled to [-1, 1]. Clips are laid out
// consecutively, frames within a clip, patches row-major within a frame.
Matrix patchify(std::span<const corpus::FrameView> clips, const EncoderConfig& config);

class VideoTower {
 public:
  VideoTower() = default;
  VideoTower(const EncoderConfig& config, Rng& rng);

  // B x width pooled clip features (before projection).
  Var pooled(std::span<const corpus::FrameView> clips, const nn::ForwardContext& ctx) const;
  // B x D unit-norm embeddings.
  Var embed(std::span<const corpus::FrameView> clips, const nn::ForwardContext& ctx) const;
  void collect(const std::string& prefix, nn::ParamList& out) const;

 private:
  EncoderConfig config_;
  nn::Linear patch_embed_;
  Var spatial_pos_;   // P x width
  Var temporal_pos_;  // F x width
  std::vector<nn::LayerNorm> spatial_norms_;
  std::vector<nn::Mlp> spatial_mlps_;
  std::vector<nn::SelfAttentionBlock> temporal_blocks_;
  nn::LayerNorm final_norm_;
  nn::Linear proj_;
};

class TextTower {
 public:
  TextTower() = default;
  TextTower(const EncoderConfig& config, int vocab_size, Rng& rng);

  // B*L x width token states and the B x width masked-mean pool.
  struct Output {
    Var tokens;
    Var pooled;
  };
  Output forward(const std::vector<std::vector<int>>& ids, const nn::ForwardContext& ctx) const;
  Var embed(const std::vector<std::vector<int>>& ids, const nn::ForwardContext& ctx) const;
  void collect(const std::string& prefix, nn::ParamList& out) const;

 private:
  EncoderConfig config_;
  Var token_embed_;  // vocab x width
  Var pos_embed_;    // L x width
  std::vector<nn::SelfAttentionBlock> blocks_;
  nn::LayerNorm final_norm_;
  nn::Linear proj_;
};

// The stage-2 two-tower model: video tower, text tower, and a learnable
// temperature stored as log(tau).
class TwoTowerModel {
 public:
  TwoTowerModel() = default;
  TwoTowerModel(EncoderConfig config, corpus::Vocabulary vocab, uint64_t seed);

  // Deep copy; the clone shares no parameter storage with this model.
  TwoTowerModel clone() const;

  Var embed_video(std::span<const corpus::FrameView> clips, const nn::ForwardContext& ctx = {}) const;
  Var pooled_video(std::span<const corpus::FrameView> clips, const nn::ForwardContext& ctx = {}) const;
  Var embed_text(std::span<const std::string> captions, const nn::ForwardContext& ctx = {}) const;
  // Token states of one caption restricted to its non-padding tokens (all
  // positions when the caption is empty).
  Var text_tokens(const std::string& caption, const nn::ForwardContext& ctx = {}) const;

  std::vector<int> tokenize(const std::string& caption) const;

  Var log_temperature() const { return log_tau_; }
  double temperature() const;
  void clamp_temperature() const;

  nn::ParamList parameters() const;
  // parameters() minus the temperature when it is fixed.
  nn::ParamList trainable_parameters() const;
  // Video-tower parameters only.
  nn::ParamList video_parameters() const;
  const EncoderConfig& config() const { return config_; }
  const corpus::Vocabulary& vocabulary() const { return vocab_; }
  uint64_t seed() const { return seed_; }

 private:
  EncoderConfig config_;
  corpus::Vocabulary vocab_;
  uint64_t seed_ = 0;
  VideoTower video_;
  TextTower text_;
  Var log_tau_;
};

// Eval-mode single-item encoders; 1 x D, unit norm.
Matrix encode_video(const TwoTowerModel& model, const corpus::FrameView& clip);
Matrix encode_text(const TwoTowerModel& model, const std::string& caption);

}  // namespace egovideo::encoders
