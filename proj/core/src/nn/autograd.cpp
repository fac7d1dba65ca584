#include "egovideo/nn/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "egovideo/common/error.hpp"
#include "egovideo/common/rng.hpp"

namespace egovideo::nn {
namespace {

thread_local bool g_grad_enabled = true;

using BackwardFn = std::function<void(Node&)>;

Var make_result(Matrix value, std::vector<std::shared_ptr<Node>> parents,
                BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs = needs || p->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(fn);
  }
  return Var(std::move(node));
}

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidArgument(std::string(op) + ": shape mismatch (" +
                          std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                          " vs " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()) + ")");
  }
}

inline double gelu_scalar(double x) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x)));
}

inline double gelu_grad_scalar(double x) {
  constexpr double k = 0.7978845608028654;
  const double u = k * (x + 0.044715 * x * x * x);
  const double t = std::tanh(u);
  const double du = k * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

inline double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
inline double softplus_scalar(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (!requires_grad) return;
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Var constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var parameter(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Var make_op(Matrix value, std::vector<std::shared_ptr<Node>> parents, BackwardFn fn) {
  return make_result(std::move(value), std::move(parents), std::move(fn));
}

void backward(const Var& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw InvalidArgument("backward: loss must be 1x1");
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && !parent->parents.empty() &&
          visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && node->grad.size() != 0) node->backward_fn(*node);
  }
}

// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw InvalidArgument("matmul: inner dimensions differ (" +
                          std::to_string(a.cols()) + " vs " +
                          std::to_string(b.rows()) + ")");
  }
  Matrix out = a.value() * b.value();
  return make_result(std::move(out), {a.node(), b.node()}, [](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) pa.accumulate(self.grad * pb.value.transpose());
    if (pb.requires_grad) pb.accumulate(pa.value.transpose() * self.grad);
  });
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "add");
  return make_result(a.value() + b.value(), {a.node(), b.node()}, [](Node& self) {
    self.parents[0]->accumulate(self.grad);
    self.parents[1]->accumulate(self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "sub");
  return make_result(a.value() - b.value(), {a.node(), b.node()}, [](Node& self) {
    self.parents[0]->accumulate(self.grad);
    self.parents[1]->accumulate(-self.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "mul");
  return make_result(a.value().cwiseProduct(b.value()), {a.node(), b.node()},
                     [](Node& self) {
                       auto& pa = *self.parents[0];
                       auto& pb = *self.parents[1];
                       if (pa.requires_grad) pa.accumulate(self.grad.cwiseProduct(pb.value));
                       if (pb.requires_grad) pb.accumulate(self.grad.cwiseProduct(pa.value));
                     });
}

Var scale(const Var& a, double s) {
  return make_result(a.value() * s, {a.node()},
                     [s](Node& self) { self.parents[0]->accumulate(self.grad * s); });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw InvalidArgument("add_row: row must be 1x" + std::to_string(a.cols()));
  }
  Matrix out = a.value().rowwise() + row.value().row(0);
  return make_result(std::move(out), {a.node(), row.node()}, [](Node& self) {
    self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->requires_grad) {
      self.parents[1]->accumulate(self.grad.colwise().sum());
    }
  });
}

Var mul_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw InvalidArgument("mul_row: row must be 1x" + std::to_string(a.cols()));
  }
  Matrix out = a.value().array().rowwise() * row.value().row(0).array();
  return make_result(std::move(out), {a.node(), row.node()}, [](Node& self) {
    auto& pa = *self.parents[0];
    auto& pr = *self.parents[1];
    if (pa.requires_grad) {
      Matrix g = self.grad.array().rowwise() * pr.value.row(0).array();
      pa.accumulate(g);
    }
    if (pr.requires_grad) pr.accumulate(self.grad.cwiseProduct(pa.value).colwise().sum());
  });
}

Var mul_col(const Var& a, const Var& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) {
    throw InvalidArgument("mul_col: column must be " + std::to_string(a.rows()) + "x1");
  }
  Matrix out = a.value().array().colwise() * col.value().col(0).array();
  return make_result(std::move(out), {a.node(), col.node()}, [](Node& self) {
    auto& pa = *self.parents[0];
    auto& pc = *self.parents[1];
    if (pa.requires_grad) {
      Matrix g = self.grad.array().colwise() * pc.value.col(0).array();
      pa.accumulate(g);
    }
    if (pc.requires_grad) pc.accumulate(self.grad.cwiseProduct(pa.value).rowwise().sum());
  });
}

Var transpose(const Var& a) {
  return make_result(a.value().transpose(), {a.node()}, [](Node& self) {
    self.parents[0]->accumulate(self.grad.transpose());
  });
}

Var relu(const Var& a) {
  return make_result(a.value().cwiseMax(0.0), {a.node()}, [](Node& self) {
    auto& p = *self.parents[0];
    Matrix g = (p.value.array() > 0.0).cast<double>() * self.grad.array();
    p.accumulate(g);
  });
}

Var gelu(const Var& a) {
  Matrix out = a.value().unaryExpr([](double x) { return gelu_scalar(x); });
  return make_result(std::move(out), {a.node()}, [](Node& self) {
    auto& p = *self.parents[0];
    Matrix g = p.value.unaryExpr([](double x) { return gelu_grad_scalar(x); })
                   .cwiseProduct(self.grad);
    p.accumulate(g);
  });
}

Var sigmoid(const Var& a) {
  Matrix out = a.value().unaryExpr([](double x) { return sigmoid_scalar(x); });
  return make_result(std::move(out), {a.node()}, [](Node& self) {
    Matrix g = self.value.array() * (1.0 - self.value.array()) * self.grad.array();
    self.parents[0]->accumulate(g);
  });
}

Var tanh(const Var& a) {
  Matrix out = a.value().array().tanh();
  return make_result(std::move(out), {a.node()}, [](Node& self) {
    Matrix g = (1.0 - self.value.array().square()) * self.grad.array();
    self.parents[0]->accumulate(g);
  });
}

Var softmax_rows(const Var& a, const Matrix& mask) {
  Matrix z = a.value();
  if (mask.size() != 0) {
    check_same_shape(z, mask, "softmax_rows(mask)");
    z += mask;
  }
  for (Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    // exp() underflow is slow in libm; masked entries are exactly zero anyway.
    z.row(i) = (z.row(i).array() - m).unaryExpr([](double v) { return v < -700.0 ? 0.0 : std::exp(v); });
    z.row(i) /= z.row(i).sum();
  }
  return make_result(std::move(z), {a.node()}, [](Node& self) {
    const Matrix& y = self.value;
    Matrix dot = (self.grad.cwiseProduct(y)).rowwise().sum();
    Matrix g = y.array() * (self.grad.colwise() - dot.col(0)).array();
    self.parents[0]->accumulate(g);
  });
}

Var layer_norm_rows(const Var& a, double eps) {
  const Matrix& x = a.value();
  const Index n = x.rows();
  const Index m = x.cols();
  Matrix xhat(n, m);
  Eigen::VectorXd inv_std(n);
  for (Index i = 0; i < n; ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (x.row(i).array() - mean) * inv_std(i);
  }
  return make_result(xhat, {a.node()}, [inv_std](Node& self) {
    const Matrix& xh = self.value;
    const Matrix& g = self.grad;
    const auto m = static_cast<double>(xh.cols());
    Matrix dx(xh.rows(), xh.cols());
    for (Index i = 0; i < xh.rows(); ++i) {
      const double gmean = g.row(i).sum() / m;
      const double gx = g.row(i).dot(xh.row(i)) / m;
      dx.row(i) = inv_std(i) * (g.row(i).array() - gmean - xh.row(i).array() * gx);
    }
    self.parents[0]->accumulate(dx);
  });
}

Var l2_normalize_rows(const Var& a, double eps) {
  const Matrix& x = a.value();
  Eigen::VectorXd norms(x.rows());
  Matrix y(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    norms(i) = std::max(x.row(i).norm(), eps);
    y.row(i) = x.row(i) / norms(i);
  }
  return make_result(y, {a.node()}, [norms](Node& self) {
    const Matrix& yv = self.value;
    Matrix dx(yv.rows(), yv.cols());
    for (Index i = 0; i < yv.rows(); ++i) {
      const double d = yv.row(i).dot(self.grad.row(i));
      dx.row(i) = (self.grad.row(i) - yv.row(i) * d) / norms(i);
    }
    self.parents[0]->accumulate(dx);
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw InvalidArgument("concat_rows: no inputs");
  const Index cols = parts[0].cols();
  Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw InvalidArgument("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<std::shared_ptr<Node>> parents;
  std::vector<Index> offsets;
  Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    offsets.push_back(r);
    parents.push_back(p.node());
    r += p.rows();
  }
  return make_result(std::move(out), std::move(parents), [offsets](Node& self) {
    for (size_t k = 0; k < self.parents.size(); ++k) {
      auto& p = *self.parents[k];
      if (p.requires_grad) p.accumulate(self.grad.middleRows(offsets[k], p.value.rows()));
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw InvalidArgument("concat_cols: no inputs");
  const Index rows = parts[0].rows();
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw InvalidArgument("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::shared_ptr<Node>> parents;
  std::vector<Index> offsets;
  Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    offsets.push_back(c);
    parents.push_back(p.node());
    c += p.cols();
  }
  return make_result(std::move(out), std::move(parents), [offsets](Node& self) {
    for (size_t k = 0; k < self.parents.size(); ++k) {
      auto& p = *self.parents[k];
      if (p.requires_grad) p.accumulate(self.grad.middleCols(offsets[k], p.value.cols()));
    }
  });
}

Var slice_rows(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw InvalidArgument("slice_rows: range out of bounds");
  }
  return make_result(a.value().middleRows(start, count), {a.node()},
                     [start](Node& self) {
                       auto& p = *self.parents[0];
                       Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
                       g.middleRows(start, self.grad.rows()) = self.grad;
                       p.accumulate(g);
                     });
}

Var slice_cols(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw InvalidArgument("slice_cols: range out of bounds");
  }
  return make_result(a.value().middleCols(start, count), {a.node()},
                     [start](Node& self) {
                       auto& p = *self.parents[0];
                       Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
                       g.middleCols(start, self.grad.cols()) = self.grad;
                       p.accumulate(g);
                     });
}

Var gather_rows(const Var& table, std::span<const int> ids) {
  Matrix out(static_cast<Index>(ids.size()), table.cols());
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) {
      throw InvalidArgument("gather_rows: id out of range");
    }
    out.row(static_cast<Index>(i)) = table.value().row(ids[i]);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return make_result(std::move(out), {table.node()}, [idv](Node& self) {
    auto& p = *self.parents[0];
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    for (size_t i = 0; i < idv.size(); ++i) g.row(idv[i]) += self.grad.row(static_cast<Index>(i));
    p.accumulate(g);
  });
}

Var mean_rows(const Var& a) {
  const auto n = static_cast<double>(a.rows());
  return make_result(a.value().colwise().mean(), {a.node()}, [n](Node& self) {
    auto& p = *self.parents[0];
    Matrix g = self.grad.replicate(p.value.rows(), 1) / n;
    p.accumulate(g);
  });
}

Var sum_all(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return make_result(std::move(out), {a.node()}, [](Node& self) {
    auto& p = *self.parents[0];
    p.accumulate(Matrix::Constant(p.value.rows(), p.value.cols(), self.grad(0, 0)));
  });
}

Var mean_all(const Var& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a.value().size()));
}

Var dropout(const Var& a, double p, Rng& rng) {
  if (p <= 0.0) return a;
  if (p >= 1.0) throw InvalidArgument("dropout: p must be < 1");
  Matrix mask(a.rows(), a.cols());
  const double keep = 1.0 / (1.0 - p);
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < p ? 0.0 : keep;
  return mul(a, constant(std::move(mask)));
}

// ---------------------------------------------------------------------------

Var cross_entropy(const Var& logits, std::span<const int> labels) {
  const Matrix& z = logits.value();
  if (static_cast<Index>(labels.size()) != z.rows()) {
    throw InvalidArgument("cross_entropy: label count does not match rows");
  }
  const auto n = static_cast<double>(z.rows());
  Matrix probs(z.rows(), z.cols());
  double loss = 0.0;
  for (Index i = 0; i < z.rows(); ++i) {
    const int y = labels[static_cast<size_t>(i)];
    if (y < 0 || y >= z.cols()) throw InvalidArgument("cross_entropy: label out of range");
    const double m = z.row(i).maxCoeff();
    probs.row(i) = (z.row(i).array() - m).exp();
    const double s = probs.row(i).sum();
    probs.row(i) /= s;
    loss += (m + std::log(s)) - z(i, y);
  }
  Matrix out(1, 1);
  out(0, 0) = loss / n;
  std::vector<int> lab(labels.begin(), labels.end());
  return make_result(std::move(out), {logits.node()},
                     [probs = std::move(probs), lab, n](Node& self) {
                       Matrix g = probs;
                       for (size_t i = 0; i < lab.size(); ++i) g(static_cast<Index>(i), lab[i]) -= 1.0;
                       self.parents[0]->accumulate(g * (self.grad(0, 0) / n));
                     });
}

Var sigmoid_focal_loss(const Var& logits, const Matrix& targets,
                       const Matrix& row_weights, double alpha, double gamma,
                       double normalizer) {
  const Matrix& z = logits.value();
  check_same_shape(z, targets, "sigmoid_focal_loss");
  if (row_weights.size() != 0 && (row_weights.rows() != z.rows() || row_weights.cols() != 1)) {
    throw InvalidArgument("sigmoid_focal_loss: row weights must be n x 1");
  }
  Matrix grad(z.rows(), z.cols());
  double loss = 0.0;
  for (Index i = 0; i < z.rows(); ++i) {
    const double w = row_weights.size() ? row_weights(i, 0) : 1.0;
    for (Index j = 0; j < z.cols(); ++j) {
      const double x = z(i, j);
      const double t = targets(i, j);
      const double p = sigmoid_scalar(x);
      // ce = -t log p - (1-t) log(1-p); pt = prob of the true class.
      const double ce = t * softplus_scalar(-x) + (1.0 - t) * softplus_scalar(x);
      const double pt = t * p + (1.0 - t) * (1.0 - p);
      const double at = t * alpha + (1.0 - t) * (1.0 - alpha);
      const double mod = std::pow(1.0 - pt, gamma);
      loss += w * at * mod * ce;
      // d/dx: dce/dx = p - t ; dpt/dx = (2t - 1) p (1-p)
      const double dce = p - t;
      const double dpt = (2.0 * t - 1.0) * p * (1.0 - p);
      const double dmod = gamma > 0.0 ? -gamma * std::pow(1.0 - pt, gamma - 1.0) * dpt : 0.0;
      grad(i, j) = w * at * (dmod * ce + mod * dce);
    }
  }
  Matrix out(1, 1);
  out(0, 0) = loss / normalizer;
  return make_result(std::move(out), {logits.node()},
                     [grad = std::move(grad), normalizer](Node& self) {
                       self.parents[0]->accumulate(grad * (self.grad(0, 0) / normalizer));
                     });
}

Var bce_with_logits(const Var& logits, const Matrix& targets) {
  const Matrix& z = logits.value();
  check_same_shape(z, targets, "bce_with_logits");
  const auto n = static_cast<double>(z.size());
  Matrix grad(z.rows(), z.cols());
  double loss = 0.0;
  for (Index i = 0; i < z.size(); ++i) {
    const double x = z.data()[i];
    const double t = targets.data()[i];
    loss += t * softplus_scalar(-x) + (1.0 - t) * softplus_scalar(x);
    grad.data()[i] = sigmoid_scalar(x) - t;
  }
  Matrix out(1, 1);
  out(0, 0) = loss / n;
  return make_result(std::move(out), {logits.node()},
                     [grad = std::move(grad), n](Node& self) {
                       self.parents[0]->accumulate(grad * (self.grad(0, 0) / n));
                     });
}

Var interval_iou_loss(const Var& pred, const Matrix& target,
                      const Matrix& row_weights, double normalizer) {
  const Matrix& d = pred.value();
  check_same_shape(d, target, "interval_iou_loss");
  if (d.cols() != 2) throw InvalidArgument("interval_iou_loss: expected n x 2 offsets");
  constexpr double kEps = 1e-9;
  Matrix grad = Matrix::Zero(d.rows(), 2);
  double loss = 0.0;
  for (Index i = 0; i < d.rows(); ++i) {
    const double w = row_weights.size() ? row_weights(i, 0) : 1.0;
    if (w == 0.0) continue;
    const double l = d(i, 0), r = d(i, 1);
    const double tl = target(i, 0), tr = target(i, 1);
    const double inter = std::min(l, tl) + std::min(r, tr);
    const double uni = (l + r) + (tl + tr) - inter + kEps;
    const double iou = inter / uni;
    loss += w * (1.0 - iou);
    const double di_dl = l < tl ? 1.0 : 0.0;
    const double di_dr = r < tr ? 1.0 : 0.0;
    const double du_dl = 1.0 - di_dl;
    const double du_dr = 1.0 - di_dr;
    grad(i, 0) = -w * (di_dl * uni - inter * du_dl) / (uni * uni);
    grad(i, 1) = -w * (di_dr * uni - inter * du_dr) / (uni * uni);
  }
  Matrix out(1, 1);
  out(0, 0) = loss / normalizer;
  return make_result(std::move(out), {pred.node()},
                     [grad = std::move(grad), normalizer](Node& self) {
                       self.parents[0]->accumulate(grad * (self.grad(0, 0) / normalizer));
                     });
}

}  // namespace egovideo::nn
