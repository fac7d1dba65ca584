#include "egovideo/ensemble/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "egovideo/common/error.hpp"
#include "egovideo/common/stable_mean.hpp"
#include "egovideo/metrics/metrics.hpp"

namespace egovideo::ensemble {

Matrix average_logits(std::span<const Matrix> members) {
  if (members.empty()) throw InvalidArgument("average_logits: no members");
  const Matrix& ref = members.front();
  for (const auto& m : members) {
    if (m.rows() != ref.rows() || m.cols() != ref.cols()) {
      throw InvalidArgument("average_logits: member shapes differ");
    }
  }
  Matrix out(ref.rows(), ref.cols());
  std::vector<double> values(members.size());
  for (nn::Index i = 0; i < ref.rows(); ++i) {
    for (nn::Index j = 0; j < ref.cols(); ++j) {
      for (size_t k = 0; k < members.size(); ++k) values[k] = members[k](i, j);
      out(i, j) = order_free_mean(values);
    }
  }
  return out;
}

Matrix average_logits(const LogitBundle& bundle) {
  if (!bundle.geometry.empty()) {
    if (bundle.geometry.size() != bundle.members.size()) {
      throw InvalidArgument("average_logits: geometry and member counts differ");
    }
    for (const auto& g : bundle.geometry) {
      if (g != bundle.geometry.front()) throw InvalidArgument("average_logits: member geometry differs");
    }
  }
  return average_logits(std::span<const Matrix>(bundle.members));
}

std::vector<double> uniform_weights(size_t n) {
  if (n == 0) return {};
  return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

namespace {

void check_weights(std::span<const double> weights, size_t n) {
  if (weights.size() != n) throw InvalidArgument("ensemble: need one weight per model");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw InvalidArgument("ensemble: weights must be nonnegative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw InvalidArgument("ensemble: weights must sum to 1");
}

struct Candidate {
  size_t model;
  size_t rank;
  TemporalSegment seg;
  double merged = 0.0;
};

}  // namespace

std::vector<TemporalSegment> merge_ranked_predictions(std::span<const std::vector<TemporalSegment>> lists,
                                                      std::span<const double> weights, double match_tiou) {
  check_weights(weights, lists.size());
  std::vector<Candidate> pool;
  for (size_t m = 0; m < lists.size(); ++m) {
    for (size_t r = 0; r < lists[m].size(); ++r) {
      if (!lists[m][r].valid()) throw InvalidArgument("ensemble: malformed segment");
      pool.push_back({m, r, lists[m][r]});
    }
  }
  for (auto& c : pool) {
    c.merged = weights[c.model] * c.seg.score;
    for (size_t m = 0; m < lists.size(); ++m) {
      if (m == c.model) continue;
      double best = 0.0;
      bool hit = false;
      for (const auto& s : lists[m]) {
        if (metrics::tiou(c.seg, s) >= match_tiou && (!hit || s.score > best)) {
          best = s.score;
          hit = true;
        }
      }
      if (hit) c.merged += weights[m] * best;
    }
  }
  std::stable_sort(pool.begin(), pool.end(), [](const Candidate& a, const Candidate& b) {
    if (a.merged != b.merged) return a.merged > b.merged;
    if (a.model != b.model) return a.model < b.model;
    return a.rank < b.rank;
  });

  std::vector<TemporalSegment> out;
  std::vector<bool> claimed(pool.size(), false);
  for (size_t i = 0; i < pool.size(); ++i) {
    if (claimed[i]) continue;
    claimed[i] = true;
    const Candidate& head = pool[i];
    double wsum = weights[head.model] * head.seg.score;
    double start = wsum * head.seg.start_s, end = wsum * head.seg.end_s;
    bool absorbed = false;
    for (size_t j = i + 1; j < pool.size(); ++j) {
      if (claimed[j] || pool[j].model == head.model) continue;
      if (metrics::tiou(head.seg, pool[j].seg) < match_tiou) continue;
      claimed[j] = true;
      absorbed = true;
      const double w = weights[pool[j].model] * pool[j].seg.score;
      wsum += w;
      start += w * pool[j].seg.start_s;
      end += w * pool[j].seg.end_s;
    }
    TemporalSegment seg = head.seg;
    if (absorbed && wsum > 0.0) {
      seg.start_s = start / wsum;
      seg.end_s = std::max(seg.start_s, end / wsum);
    }
    seg.score = head.merged;
    out.push_back(seg);
  }
  return out;
}

QueryPredictions merge_prediction_sets(std::span<const QueryPredictions> sets, std::span<const double> weights,
                                       double match_tiou) {
  check_weights(weights, sets.size());
  std::vector<std::string> ids;
  for (const auto& s : sets)
    for (const auto& [id, _] : s) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  QueryPredictions out;
  for (const auto& id : ids) {
    std::vector<std::vector<TemporalSegment>> lists;
    for (const auto& s : sets) {
      const auto it = s.find(id);
      lists.push_back(it == s.end() ? std::vector<TemporalSegment>{} : it->second);
    }
    out[id] = merge_ranked_predictions(lists, weights, match_tiou);
  }
  return out;
}

std::vector<double> parse_weights(const std::string& text, size_t n) {
  if (text.empty()) return uniform_weights(n);
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InvalidArgument("cannot parse weight '" + item + "'");
    }
  }
  check_weights(out, n);
  return out;
}

}  // namespace egovideo::ensemble
