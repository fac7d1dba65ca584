#include "egovideo/nn/layers.hpp"

#include <cmath>
#include <unordered_map>

#include "egovideo/common/error.hpp"

namespace egovideo::nn {

void copy_parameter_values(const ParamList& src, const ParamList& dst) {
  std::unordered_map<std::string, const Var*> by_name;
  for (const auto& p : src) by_name[p.name] = &p.var;
  for (const auto& p : dst) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw InvalidArgument("missing parameter: " + p.name);
    const Matrix& v = it->second->value();
    if (v.rows() != p.var.rows() || v.cols() != p.var.cols()) {
      throw InvalidArgument("parameter shape mismatch: " + p.name);
    }
    p.var.mutable_value() = v;
  }
}

Matrix block_diagonal_mask(const std::vector<int>& group_sizes) {
  int n = 0;
  for (int g : group_sizes) n += g;
  Matrix mask = Matrix::Constant(n, n, kMaskedLogit);
  int offset = 0;
  for (int g : group_sizes) {
    mask.block(offset, offset, g, g).setZero();
    offset += g;
  }
  return mask;
}

Matrix causal_mask(int n) {
  Matrix mask = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) mask(i, j) = kMaskedLogit;
  }
  return mask;
}

Matrix padded_block_mask(const std::vector<int>& group_sizes,
                         const std::vector<bool>& valid) {
  Matrix mask = block_diagonal_mask(group_sizes);
  int offset = 0;
  for (int g : group_sizes) {
    bool any = false;
    for (int j = 0; j < g; ++j) any = any || valid[static_cast<size_t>(offset + j)];
    if (any) {
      for (int j = 0; j < g; ++j) {
        if (!valid[static_cast<size_t>(offset + j)]) {
          mask.block(offset, offset + j, g, 1).setConstant(kMaskedLogit);
        }
      }
    }
    offset += g;
  }
  return mask;
}

Linear::Linear(int in, int out, Rng& rng, bool with_bias) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Matrix w(in, out);
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-limit, limit);
  weight = parameter(std::move(w));
  if (with_bias) bias = parameter(Matrix::Zero(1, out));
}

Var Linear::forward(const Var& x) const {
  Var y = matmul(x, weight);
  return bias.defined() ? add_row(y, bias) : y;
}

void Linear::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
  if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

LayerNorm::LayerNorm(int width)
    : gamma(parameter(Matrix::Ones(1, width))), beta(parameter(Matrix::Zero(1, width))) {}

Var LayerNorm::forward(const Var& x) const {
  return add_row(mul_row(layer_norm_rows(x), gamma), beta);
}

void LayerNorm::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

Mlp::Mlp(int in, int hidden, int out, Rng& rng) : fc1(in, hidden, rng), fc2(hidden, out, rng) {}

Var Mlp::forward(const Var& x) const { return fc2.forward(gelu(fc1.forward(x))); }

void Mlp::collect(const std::string& prefix, ParamList& out) const {
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

MultiHeadAttention::MultiHeadAttention(int width, int num_heads, Rng& rng)
    : heads(num_heads), q(width, width, rng), k(width, width, rng), v(width, width, rng),
      o(width, width, rng) {
  if (width % num_heads != 0) throw InvalidArgument("attention width must divide by heads");
}

Var MultiHeadAttention::forward(const Var& x, const Var& context, const Matrix& mask) const {
  const Var qs = q.forward(x);
  const Var ks = k.forward(context);
  const Var vs = v.forward(context);
  const Index head_dim = qs.cols() / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Var> outs;
  outs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Var qh = slice_cols(qs, h * head_dim, head_dim);
    const Var kh = slice_cols(ks, h * head_dim, head_dim);
    const Var vh = slice_cols(vs, h * head_dim, head_dim);
    const Var attn = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt), mask);
    outs.push_back(matmul(attn, vh));
  }
  return o.forward(heads == 1 ? outs[0] : concat_cols(outs));
}

void MultiHeadAttention::collect(const std::string& prefix, ParamList& out) const {
  q.collect(prefix + ".q", out);
  k.collect(prefix + ".k", out);
  v.collect(prefix + ".v", out);
  o.collect(prefix + ".o", out);
}

Var residual_branch(const Var& branch, const ForwardContext& ctx) {
  if (!ctx.training || ctx.rng == nullptr) return branch;
  Var b = dropout(branch, ctx.dropout, *ctx.rng);
  if (ctx.drop_path > 0.0) {
    if (ctx.rng->uniform() < ctx.drop_path) return scale(b, 0.0);
    b = scale(b, 1.0 / (1.0 - ctx.drop_path));
  }
  return b;
}

SelfAttentionBlock::SelfAttentionBlock(int width, int heads, int mlp_hidden, Rng& rng)
    : norm1(width), norm2(width), attn(width, heads, rng), mlp(width, mlp_hidden, width, rng) {}

Var SelfAttentionBlock::forward(const Var& x, const Matrix& mask,
                                const ForwardContext& ctx) const {
  const Var h = norm1.forward(x);
  Var y = add(x, residual_branch(attn.forward(h, h, mask), ctx));
  return add(y, residual_branch(mlp.forward(norm2.forward(y)), ctx));
}

void SelfAttentionBlock::collect(const std::string& prefix, ParamList& out) const {
  norm1.collect(prefix + ".norm1", out);
  attn.collect(prefix + ".attn", out);
  norm2.collect(prefix + ".norm2", out);
  mlp.collect(prefix + ".mlp", out);
}

CrossAttentionBlock::CrossAttentionBlock(int width, int heads, Rng& rng)
    : norm(width), attn(width, heads, rng) {}

Var CrossAttentionBlock::forward(const Var& x, const Var& context, const Matrix& mask,
                                 const ForwardContext& ctx) const {
  return add(x, residual_branch(attn.forward(norm.forward(x), context, mask), ctx));
}

void CrossAttentionBlock::collect(const std::string& prefix, ParamList& out) const {
  norm.collect(prefix + ".norm", out);
  attn.collect(prefix + ".attn", out);
}

}  // namespace egovideo::nn
