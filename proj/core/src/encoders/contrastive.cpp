#include "egovideo/encoders/contrastive.hpp"

#include <cmath>

#include "egovideo/common/error.hpp"

namespace egovideo::encoders {

using nn::Index;
using nn::Matrix;

ContrastiveResult contrastive_loss(const Matrix& video, const Matrix& text, double tau) {
  if (!(tau > 0.0)) throw InvalidArgument("contrastive_loss: tau must be positive");
  if (video.rows() == 0) throw InvalidArgument("contrastive_loss: empty batch");
  if (video.rows() != text.rows() || video.cols() != text.cols()) {
    throw InvalidArgument("contrastive_loss: video and text batches differ in shape");
  }
  const Index b = video.rows();
  const Matrix z = (video * text.transpose()) / tau;

  // Row and column softmax with max subtraction; the log-sum-exp terms give
  // the loss, the probabilities give the gradient.
  Matrix p_row(b, b), p_col(b, b);
  double loss_rows = 0.0, loss_cols = 0.0;
  for (Index i = 0; i < b; ++i) {
    const double m = z.row(i).maxCoeff();
    p_row.row(i) = (z.row(i).array() - m).exp();
    const double s = p_row.row(i).sum();
    p_row.row(i) /= s;
    loss_rows += m + std::log(s) - z(i, i);
  }
  for (Index j = 0; j < b; ++j) {
    const double m = z.col(j).maxCoeff();
    p_col.col(j) = (z.col(j).array() - m).exp();
    const double s = p_col.col(j).sum();
    p_col.col(j) /= s;
    loss_cols += m + std::log(s) - z(j, j);
  }

  ContrastiveResult r;
  const double n = static_cast<double>(b);
  r.loss = 0.5 * (loss_rows + loss_cols) / n;
  // dL/dZ
  Matrix g = (p_row + p_col) * (0.5 / n);
  g.diagonal().array() -= 1.0 / n;
  r.grad_video = g * text / tau;
  r.grad_text = g.transpose() * video / tau;
  r.grad_tau = -(g.array() * z.array()).sum() / tau;
  return r;
}

nn::Var contrastive_loss(const nn::Var& video, const nn::Var& text, const nn::Var& tau_log) {
  const double tau = std::exp(tau_log.item());
  auto r = contrastive_loss(video.value(), text.value(), tau);
  Matrix out(1, 1);
  out(0, 0) = r.loss;
  return nn::make_op(std::move(out), {video.node(), text.node(), tau_log.node()},
                     [r = std::move(r), tau](nn::Node& self) {
                       const double up = self.grad(0, 0);
                       self.parents[0]->accumulate(r.grad_video * up);
                       self.parents[1]->accumulate(r.grad_text * up);
                       // d/dlog(tau) = tau * d/dtau
                       self.parents[2]->accumulate(Matrix::Constant(1, 1, r.grad_tau * tau * up));
                     });
}

}  // namespace egovideo::encoders
