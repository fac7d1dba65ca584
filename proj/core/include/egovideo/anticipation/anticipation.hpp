#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "egovideo/common/jsonl.hpp"
#include "egovideo/encoders/classifier.hpp"

namespace egovideo::anticipation {

using corpus::ActionToken;
using nn::Matrix;
using nn::Var;

using Sequence = std::vector<ActionToken>;

// ---- clip classification ----------------------------------------------------

struct ClipLogits {
  Matrix verb;  // 1 x V
  Matrix noun;  // 1 x Nn
};

ClipLogits classify_clip(const corpus::FrameView& clip, const encoders::ActionClassifier& model);
ActionToken predicted_action(const ClipLogits& logits);

struct ClassificationTop1 {
  double verb = 0.0;
  double noun = 0.0;
  double action = 0.0;
};

// Top-1 accuracies in [0, 1]; an action counts when both argmaxes are right.
ClassificationTop1 classification_top1(const Matrix& verb_logits, const Matrix& noun_logits,
                                       std::span<const ActionToken> labels);

// History tokens predicted from the clip windows of an annotation.
Sequence infer_history(const corpus::Clip& clip, const corpus::AnticipationAnnotation& annotation,
                       const encoders::ActionClassifier& model);

// ---- sequence model -----------------------------------------------------------

struct LTAConfig {
  int history = 8;
  int future = 20;
  int width = 32;
  int heads = 2;
  int layers = 2;
  double lr = 3e-4;
  double gamma = 0.85;
  int batch_size = 32;
  int epochs = 3;
  int candidates = 5;
  double temperature = 1.0;
  double weight_decay = 0.01;
  uint64_t seed = 0;
};

void validate(const LTAConfig& config);
io::Json to_json(const LTAConfig& config);
LTAConfig lta_config_from_json(const io::Json& j, LTAConfig base = {});

// Causal transformer over action ids (verb * Nn + noun).
class ActionSequenceModel {
 public:
  ActionSequenceModel() = default;
  ActionSequenceModel(int num_verbs, int num_nouns, LTAConfig config);

  ActionSequenceModel clone() const;

  // B*L x num_actions next-token logits for B sequences of equal length L.
  Var forward(const std::vector<std::vector<int>>& ids, const nn::ForwardContext& ctx = {}) const;

  nn::ParamList parameters() const;
  const LTAConfig& config() const { return config_; }
  int num_verbs() const { return num_verbs_; }
  int num_nouns() const { return num_nouns_; }
  int num_actions() const { return num_verbs_ * num_nouns_; }

 private:
  int num_verbs_ = 0;
  int num_nouns_ = 0;
  LTAConfig config_;
  Var token_embed_;
  Var pos_embed_;
  std::vector<nn::SelfAttentionBlock> blocks_;
  nn::LayerNorm norm_;
  nn::Linear head_;
};

struct LTAExample {
  std::string example_id;
  Sequence history;
  Sequence future;
};

std::vector<LTAExample> examples_from(std::span<const corpus::AnticipationAnnotation> annotations);

struct LTATrainLog {
  int epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
};

// Teacher forcing on history + future[0..F-2]; targets are the F future tokens.
// AdamW with lr * gamma^epoch.
ActionSequenceModel train_sequence_model(const ActionSequenceModel& init, std::span<const LTAExample> data,
                                         std::vector<LTATrainLog>* log = nullptr);

// K rollouts of config().future tokens. Candidate 0 is greedy; the rest sample
// at config().temperature from an Rng seeded by `seed`.
std::vector<Sequence> predict_future(const Sequence& history, const ActionSequenceModel& model, int k,
                                     uint64_t seed = 0);

// ---- evaluation ---------------------------------------------------------------

struct EditDistances {
  double verb = 0.0;
  double noun = 0.0;
  double action = 0.0;
};

// Per example: min over candidates of Levenshtein / length, separately over
// verb, noun and action ids; dataset value = mean x 100.
EditDistances edit_distance_eval(std::span<const std::vector<Sequence>> candidates, std::span<const Sequence> gt,
                                 int num_nouns);

struct CandidateRecord {
  std::string example_id;
  std::vector<Sequence> candidates;
};

void write_candidates(const std::filesystem::path& path, std::span<const CandidateRecord> records);
std::vector<CandidateRecord> read_candidates(const std::filesystem::path& path);

}  // namespace egovideo::anticipation
