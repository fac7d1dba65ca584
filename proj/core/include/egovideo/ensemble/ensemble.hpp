#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "egovideo/metrics/segment.hpp"
#include "egovideo/nn/autograd.hpp"

namespace egovideo::ensemble {

using nn::Matrix;

struct LogitBundle {
  std::vector<Matrix> members;
  // Free-form description of what the rows and columns index; must match
  // across members when set.
  std::vector<std::string> geometry;
};

// Elementwise mean; exact for identical members and order independent.
Matrix average_logits(std::span<const Matrix> members);
Matrix average_logits(const LogitBundle& bundle);

inline constexpr double kMergeTiou = 0.75;

// Uniform weights for n models.
std::vector<double> uniform_weights(size_t n);

// Merge of per-model ranked segment lists for one query.
// Score of a candidate from model m: w_m * own score plus, for every other
// model, w * (best score of that model's segments at tIoU >= match_tiou).
// Greedy in descending score; each pick absorbs matching unclaimed candidates
// of the other models and takes their score*weight averaged interval.
std::vector<TemporalSegment> merge_ranked_predictions(std::span<const std::vector<TemporalSegment>> lists,
                                                      std::span<const double> weights,
                                                      double match_tiou = kMergeTiou);

using QueryPredictions = std::map<std::string, std::vector<TemporalSegment>>;

// Per-query merge over prediction sets; a query missing from a model counts
// as an empty list for it.
QueryPredictions merge_prediction_sets(std::span<const QueryPredictions> sets, std::span<const double> weights,
                                       double match_tiou = kMergeTiou);

// Parses "0.5,0.5"; empty text gives uniform weights for n models.
std::vector<double> parse_weights(const std::string& text, size_t n);

}  // namespace egovideo::ensemble
