#include "egovideo/nn/optim.hpp"

#include <cmath>
#include <numbers>
#include <unordered_map>

#include "egovideo/common/error.hpp"

namespace egovideo::nn {

AdamW::AdamW(ParamList params, AdamWOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    m_.push_back(Matrix::Zero(p.var.rows(), p.var.cols()));
    v_.push_back(Matrix::Zero(p.var.rows(), p.var.cols()));
  }
}

void AdamW::zero_grad() {
  for (const auto& p : params_) p.var.zero_grad();
}

void AdamW::step(double lr) {
  ++step_count_;
  double clip = 1.0;
  if (options_.clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& p : params_) {
      if (p.var.grad().size() != 0) sq += p.var.grad().squaredNorm();
    }
    const double norm = std::sqrt(sq);
    if (norm > options_.clip_norm) clip = options_.clip_norm / norm;
  }
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_count_));
  for (size_t i = 0; i < params_.size(); ++i) {
    const Var& p = params_[i].var;
    if (p.grad().size() == 0) continue;
    const Matrix g = p.grad() * clip;
    m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * g;
    v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * g.cwiseProduct(g);
    Matrix& w = p.mutable_value();
    if (options_.weight_decay > 0.0 && w.rows() > 1 && w.cols() > 1) {
      w *= (1.0 - lr * options_.weight_decay);
    }
    w.array() -= lr * (m_[i].array() / bc1) /
                 ((v_[i].array() / bc2).sqrt() + options_.eps);
  }
  zero_grad();
}

std::vector<std::pair<std::string, Matrix>> AdamW::state() const {
  std::vector<std::pair<std::string, Matrix>> out;
  for (size_t i = 0; i < params_.size(); ++i) {
    out.emplace_back("adam.m." + params_[i].name, m_[i]);
    out.emplace_back("adam.v." + params_[i].name, v_[i]);
  }
  return out;
}

void AdamW::load_state(const std::vector<std::pair<std::string, Matrix>>& tensors,
                       long long step_count) {
  std::unordered_map<std::string, const Matrix*> by_name;
  for (const auto& [name, m] : tensors) by_name[name] = &m;
  for (size_t i = 0; i < params_.size(); ++i) {
    auto m = by_name.find("adam.m." + params_[i].name);
    auto v = by_name.find("adam.v." + params_[i].name);
    if (m == by_name.end() || v == by_name.end()) continue;
    m_[i] = *m->second;
    v_[i] = *v->second;
  }
  step_count_ = step_count;
}

double warmup_cosine_lr(long long step, long long warmup_steps, long long total_steps,
                        double max_lr, double min_lr) {
  if (warmup_steps > 0 && step < warmup_steps) {
    return max_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  const long long decay_steps = total_steps - warmup_steps;
  if (decay_steps <= 0) return max_lr;
  const double progress =
      std::min(1.0, static_cast<double>(step - warmup_steps) / static_cast<double>(decay_steps));
  return min_lr + 0.5 * (max_lr - min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

double step_decay_lr(int epoch, double base_lr, double gamma) {
  return base_lr * std::pow(gamma, epoch);
}

}  // namespace egovideo::nn
