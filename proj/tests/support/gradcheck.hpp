#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "egovideo/common/rng.hpp"
#include "egovideo/nn/autograd.hpp"

namespace egovideo::testing {

// Largest relative error between backprop gradients and central differences
// over every entry of every input. Entries whose magnitude is below floor
// are compared in absolute terms against floor.
inline double max_gradient_error(std::vector<nn::Var> inputs,
                                 const std::function<nn::Var(const std::vector<nn::Var>&)>& f,
                                 double h = 1e-6, double floor = 1e-4) {
  for (auto& v : inputs) v.zero_grad();
  nn::backward(f(inputs));
  double worst = 0.0;
  for (auto& v : inputs) {
    nn::Matrix analytic = v.grad();
    if (analytic.size() == 0) analytic = nn::Matrix::Zero(v.rows(), v.cols());
    for (nn::Index i = 0; i < v.rows(); ++i) {
      for (nn::Index j = 0; j < v.cols(); ++j) {
        const double saved = v.value()(i, j);
        double plus, minus;
        {
          nn::NoGradGuard guard;
          v.mutable_value()(i, j) = saved + h;
          plus = f(inputs).item();
          v.mutable_value()(i, j) = saved - h;
          minus = f(inputs).item();
          v.mutable_value()(i, j) = saved;
        }
        const double numeric = (plus - minus) / (2.0 * h);
        const double denom = std::max({std::abs(numeric), std::abs(analytic(i, j)), floor});
        worst = std::max(worst, std::abs(numeric - analytic(i, j)) / denom);
      }
    }
  }
  return worst;
}

inline nn::Matrix random_matrix(Rng& rng, nn::Index rows, nn::Index cols, double scale = 1.0) {
  nn::Matrix m(rows, cols);
  for (nn::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

}  // namespace egovideo::testing
