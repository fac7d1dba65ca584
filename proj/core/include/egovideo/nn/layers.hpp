#pragma once

#include <string>
#include <vector>

#include "egovideo/common/rng.hpp"
#include "egovideo/nn/autograd.hpp"

namespace egovideo::nn {

struct NamedParam {
  std::string name;
  Var var;
};
using ParamList = std::vector<NamedParam>;

// Copies values (not node identity) from src into dst by name. Every name in
// dst must be present in src with the same shape.
void copy_parameter_values(const ParamList& src, const ParamList& dst);

// Training-time knobs threaded through forward passes. A default-constructed
// context is eval mode.
struct ForwardContext {
  bool training = false;
  double dropout = 0.0;
  double drop_path = 0.0;
  Rng* rng = nullptr;
};

inline constexpr double kMaskedLogit = -1e9;

// Additive attention masks (0 = visible, kMaskedLogit = hidden).
Matrix block_diagonal_mask(const std::vector<int>& group_sizes);
Matrix causal_mask(int n);
// Rows attend only to keys in the same group whose valid flag is set. A group
// with no valid keys falls back to attending to all of its keys.
Matrix padded_block_mask(const std::vector<int>& group_sizes,
                         const std::vector<bool>& valid);

class Linear {
 public:
  Linear() = default;
  Linear(int in, int out, Rng& rng, bool bias = true);

  Var forward(const Var& x) const;
  void collect(const std::string& prefix, ParamList& out) const;

  int in_features() const { return static_cast<int>(weight.rows()); }
  int out_features() const { return static_cast<int>(weight.cols()); }

  Var weight;  // in x out
  Var bias;    // 1 x out, undefined when constructed without bias
};

class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(int width);

  Var forward(const Var& x) const;
  void collect(const std::string& prefix, ParamList& out) const;

  Var gamma;
  Var beta;
};

class Mlp {
 public:
  Mlp() = default;
  Mlp(int in, int hidden, int out, Rng& rng);

  Var forward(const Var& x) const;
  void collect(const std::string& prefix, ParamList& out) const;

  Linear fc1;
  Linear fc2;
};

// Multi-head attention where queries come from x and keys/values from
// context (self-attention when context is x).
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(int width, int heads, Rng& rng);

  Var forward(const Var& x, const Var& context, const Matrix& mask) const;
  void collect(const std::string& prefix, ParamList& out) const;

  int heads = 1;
  Linear q, k, v, o;
};

// Pre-norm transformer block: x + Attn(LN(x)), then x + Mlp(LN(x)).
class SelfAttentionBlock {
 public:
  SelfAttentionBlock() = default;
  SelfAttentionBlock(int width, int heads, int mlp_hidden, Rng& rng);

  Var forward(const Var& x, const Matrix& mask, const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParamList& out) const;

  LayerNorm norm1, norm2;
  MultiHeadAttention attn;
  Mlp mlp;
};

// Pre-norm cross-attention block: x + Attn(LN(x), context).
class CrossAttentionBlock {
 public:
  CrossAttentionBlock() = default;
  CrossAttentionBlock(int width, int heads, Rng& rng);

  Var forward(const Var& x, const Var& context, const Matrix& mask,
              const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParamList& out) const;

  LayerNorm norm;
  MultiHeadAttention attn;
};

// Residual branch regularization: dropout inside the branch, then drop the
// whole branch with probability ctx.drop_path (stochastic depth).
Var residual_branch(const Var& branch, const ForwardContext& ctx);

}  // namespace egovideo::nn
