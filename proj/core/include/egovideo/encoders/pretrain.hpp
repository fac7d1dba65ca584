#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "egovideo/corpus/world.hpp"
#include "egovideo/encoders/model.hpp"
#include "egovideo/nn/tensor_io.hpp"

namespace egovideo::encoders {

struct TrainingPair {
  corpus::FrameView frames;
  std::string caption;
};

// Resolves each pair's clip reference against the world.
std::vector<TrainingPair> training_pairs(const corpus::World& world,
                                         std::span<const corpus::ClipTextPair> pairs);

struct PretrainOptions {
  int epochs = 5;
  int batch_size = 32;
  double lr = 1e-3;
  double min_lr = 0.0;
  // Linear warmup length as a fraction of all steps.
  double warmup_fraction = 0.1;
  double weight_decay = 0.01;
  uint64_t seed = 0;
  std::function<void(int epoch, double mean_loss)> on_epoch;
};

struct TrainingState {
  int epoch = 0;
  std::vector<double> epoch_losses;
  long long optimizer_steps = 0;
  nn::NamedTensors optimizer_moments;
};

struct PretrainResult {
  TwoTowerModel model;
  TrainingState state;
};

// Contrastive post-pretraining of both towers with AdamW and warmup-cosine
// decay. The initial model is not modified; epochs = 0 returns an exact copy.
PretrainResult post_pretrain(const TwoTowerModel& init, std::span<const TrainingPair> corpus,
                             const PretrainOptions& options);

// Checkpoint = "<path>" tensor container (parameters and optimizer moments)
// plus "<path>.json" with config, vocabulary and training metadata.
void save_checkpoint(const std::filesystem::path& path, const TwoTowerModel& model,
                     const TrainingState& state = {});
PretrainResult load_checkpoint(const std::filesystem::path& path);

}  // namespace egovideo::encoders
