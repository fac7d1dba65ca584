#include "egovideo/metrics/metrics.hpp"

#include <algorithm>

#include "egovideo/common/error.hpp"

namespace egovideo::metrics {

double tiou(const TemporalSegment& a, const TemporalSegment& b) {
  if (a.start_s == b.start_s && a.end_s == b.end_s) return 1.0;
  const double inter = std::max(0.0, std::min(a.end_s, b.end_s) - std::max(a.start_s, b.start_s));
  const double uni = (a.end_s - a.start_s) + (b.end_s - b.start_s) - inter;
  return inter / (uni + kTiouEpsilon);
}

double average_precision(const std::vector<bool>& ranked_relevance) {
  double sum = 0.0;
  int hits = 0;
  for (size_t r = 0; r < ranked_relevance.size(); ++r) {
    if (!ranked_relevance[r]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  return hits == 0 ? 0.0 : sum / hits;
}

int levenshtein(std::span<const int> a, std::span<const int> b) {
  std::vector<int> prev(b.size() + 1);
  std::vector<int> cur(b.size() + 1);
  for (size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= b.size(); ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double topk_accuracy(const nn::Matrix& logits, std::span<const int> labels, int k) {
  require(k >= 1, "topk_accuracy: k must be >= 1");
  require(static_cast<nn::Index>(labels.size()) == logits.rows(),
          "topk_accuracy: label count does not match rows");
  if (labels.empty()) return 0.0;
  int correct = 0;
  for (nn::Index i = 0; i < logits.rows(); ++i) {
    const int y = labels[static_cast<size_t>(i)];
    if (y < 0 || y >= logits.cols()) throw InvalidArgument("topk_accuracy: label out of range");
    const double v = logits(i, y);
    int ahead = 0;
    for (nn::Index j = 0; j < logits.cols(); ++j) {
      if (logits(i, j) > v || (logits(i, j) == v && j < y)) ++ahead;
    }
    if (ahead < k) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

int argmax_row(const nn::Matrix& m, nn::Index row) {
  int best = 0;
  for (nn::Index j = 1; j < m.cols(); ++j) {
    if (m(row, j) > m(row, best)) best = static_cast<int>(j);
  }
  return best;
}

}  // namespace egovideo::metrics
