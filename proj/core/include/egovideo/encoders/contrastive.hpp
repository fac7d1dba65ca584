#pragma once

#include "egovideo/nn/autograd.hpp"

namespace egovideo::encoders {

struct ContrastiveResult {
  double loss = 0.0;
  nn::Matrix grad_video;
  nn::Matrix grad_text;
  double grad_tau = 0.0;
};

// Symmetric InfoNCE over S = V * T^T / tau with the diagonal as targets:
//   loss = 1/2 * (mean_i CE(row i) + mean_j CE(column j)).
// Gradients are analytic. Throws InvalidArgument when tau <= 0, the batch is
// empty, or the shapes disagree.
ContrastiveResult contrastive_loss(const nn::Matrix& video, const nn::Matrix& text, double tau);

// Same loss as a tape op; tau_log is 1 x 1 holding log(tau).
nn::Var contrastive_loss(const nn::Var& video, const nn::Var& text, const nn::Var& tau_log);

}  // namespace egovideo::encoders
