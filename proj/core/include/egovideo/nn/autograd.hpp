#pragma once

// Minimal reverse-mode automatic differentiation over dense 2-D matrices.
//
// Every op returns a Var wrapping a node on a dynamically built tape. Calling
// backward() on a 1x1 Var walks the tape in reverse topological order and
// accumulates gradients into every node that requires them. Leaves created
// with parameter() persist across steps; everything else is released with the
// last Var that references it.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace egovideo {
class Rng;
}

namespace egovideo::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void accumulate(const Matrix& g);
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  // Vars are handles; mutating through a const handle is intentional.
  Matrix& mutable_value() const { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Matrix& mutable_grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  double item() const { return node_->value(0, 0); }
  bool defined() const { return static_cast<bool>(node_); }

  void zero_grad() const { node_->grad.resize(0, 0); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Matrix value);
Var parameter(Matrix value);

// Seeds d(loss)/d(loss) = 1 and propagates. loss must be 1x1.
void backward(const Var& loss);

// While alive, ops on this thread record no graph and return constants.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Builds a result node for a fused op. backward_fn receives the result node
// (with .grad set) and must accumulate into its parents. The graph is only
// recorded when gradients are enabled and some parent requires them.
Var make_op(Matrix value, std::vector<std::shared_ptr<Node>> parents,
            std::function<void(Node&)> backward_fn);

// ---- elementwise / linear algebra ----------------------------------------
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
// a (n x m) + row (1 x m), broadcast over rows.
Var add_row(const Var& a, const Var& row);
// a (n x m) * row (1 x m), broadcast over rows.
Var mul_row(const Var& a, const Var& row);
// a (n x m) * col (n x 1), broadcast over columns.
Var mul_col(const Var& a, const Var& col);
Var transpose(const Var& a);

Var relu(const Var& a);
Var gelu(const Var& a);
Var sigmoid(const Var& a);
Var tanh(const Var& a);

// Row softmax of (a + mask). mask may be empty; masked entries should hold a
// large negative value.
Var softmax_rows(const Var& a, const Matrix& mask = Matrix());
Var layer_norm_rows(const Var& a, double eps = 1e-5);
Var l2_normalize_rows(const Var& a, double eps = 1e-12);

// ---- shape ---------------------------------------------------------------
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(const Var& a, Index start, Index count);
Var slice_cols(const Var& a, Index start, Index count);
Var gather_rows(const Var& table, std::span<const int> ids);
Var mean_rows(const Var& a);
Var sum_all(const Var& a);
Var mean_all(const Var& a);

// Inverted dropout. Identity when p == 0.
Var dropout(const Var& a, double p, Rng& rng);

// ---- losses (all return 1x1) ---------------------------------------------
// Mean softmax cross-entropy over rows.
Var cross_entropy(const Var& logits, std::span<const int> labels);

// Sum over elements of per-element sigmoid focal loss, each row scaled by
// row_weights(i) (n x 1, may be empty for 1.0), divided by normalizer.
Var sigmoid_focal_loss(const Var& logits, const Matrix& targets,
                       const Matrix& row_weights, double alpha, double gamma,
                       double normalizer);

// Binary cross-entropy with logits, mean over elements.
Var bce_with_logits(const Var& logits, const Matrix& targets);

// 1-D IoU loss between intervals anchored at a common point. pred and target
// hold nonnegative (left, right) distances, n x 2. Returns
// sum_i w_i * (1 - IoU_i) / normalizer.
Var interval_iou_loss(const Var& pred, const Matrix& target,
                      const Matrix& row_weights, double normalizer);

}  // namespace egovideo::nn
