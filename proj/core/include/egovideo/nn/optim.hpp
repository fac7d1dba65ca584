#pragma once

#include <string>
#include <vector>

#include "egovideo/nn/layers.hpp"

namespace egovideo::nn {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double clip_norm = 1.0;  // <= 0 disables global-norm clipping
};

// Decoupled-weight-decay Adam. Weight decay applies only to matrices (both
// dimensions > 1); biases, norms and scalars are not decayed.
class AdamW {
 public:
  AdamW(ParamList params, AdamWOptions options = {});

  void zero_grad();
  void step(double lr);

  long long steps() const { return step_count_; }
  const ParamList& params() const { return params_; }

  // Optimizer moments as named tensors ("adam.m.<name>", "adam.v.<name>").
  std::vector<std::pair<std::string, Matrix>> state() const;
  void load_state(const std::vector<std::pair<std::string, Matrix>>& tensors,
                  long long step_count);

 private:
  ParamList params_;
  AdamWOptions options_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  long long step_count_ = 0;
};

// Linear warmup from 0 to max_lr over warmup_steps, then cosine decay to
// min_lr at total_steps.
double warmup_cosine_lr(long long step, long long warmup_steps, long long total_steps,
                        double max_lr, double min_lr = 0.0);

// Per-epoch multiplicative decay: base_lr * gamma^epoch.
double step_decay_lr(int epoch, double base_lr, double gamma);

}  // namespace egovideo::nn
