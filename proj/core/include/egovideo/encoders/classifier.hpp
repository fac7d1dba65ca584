#pragma once

#include <functional>
#include <span>
#include <vector>

#include "egovideo/encoders/model.hpp"

namespace egovideo::encoders {

// Verb and noun heads on the pooled features of a stage-2 video tower.
class ActionClassifier {
 public:
  ActionClassifier() = default;
  // Copies the backbone; the classifier never aliases its weights.
  ActionClassifier(const TwoTowerModel& backbone, int num_verbs, int num_nouns, uint64_t seed);

  ActionClassifier clone() const;

  struct Logits {
    Var verb;  // B x V
    Var noun;  // B x Nn
  };
  Logits forward(std::span<const corpus::FrameView> clips, const nn::ForwardContext& ctx = {}) const;

  nn::ParamList parameters() const;
  int num_verbs() const { return num_verbs_; }
  int num_nouns() const { return num_nouns_; }
  const TwoTowerModel& backbone() const { return backbone_; }

 private:
  TwoTowerModel backbone_;
  int num_verbs_ = 0;
  int num_nouns_ = 0;
  uint64_t seed_ = 0;
  nn::Linear verb_head_;
  nn::Linear noun_head_;
};

struct LabeledClip {
  corpus::FrameView frames;
  int verb_id = 0;
  int noun_id = 0;
};

struct ClassifierTrainOptions {
  int epochs = 100;
  int batch_size = 48;
  double lr = 1e-5;
  int warmup_epochs = 2;
  double weight_decay = 0.01;
  double dropout = 0.0;
  uint64_t seed = 0;
  std::function<void(int epoch, double mean_loss)> on_epoch;
};

// Cross-entropy on verb and noun heads (summed), AdamW, linear warmup over
// warmup_epochs then cosine decay. epochs = 0 returns a copy of init.
ActionClassifier train_classifier(const ActionClassifier& init, std::span<const LabeledClip> data,
                                  const ClassifierTrainOptions& options);

struct ClassifierScores {
  nn::Matrix verb;
  nn::Matrix noun;
};
// Eval-mode logits, batched internally.
ClassifierScores predict_logits(const ActionClassifier& model,
                                std::span<const corpus::FrameView> clips, int batch_size = 64);

}  // namespace egovideo::encoders
