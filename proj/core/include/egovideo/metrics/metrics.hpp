#pragma once

#include <span>
#include <vector>

#include "egovideo/metrics/segment.hpp"
#include "egovideo/nn/autograd.hpp"

namespace egovideo::metrics {

inline constexpr double kTiouEpsilon = 1e-9;

// |a ∩ b| / (|a ∪ b| + eps). Two identical segments (including equal points)
// have tIoU exactly 1.
double tiou(const TemporalSegment& a, const TemporalSegment& b);

// Mean of precision@r over the ranks r holding a relevant flag; 0 when no flag
// is set.
double average_precision(const std::vector<bool>& ranked_relevance);

// Unit-cost edit distance.
int levenshtein(std::span<const int> a, std::span<const int> b);

// Fraction of rows whose label is among the k largest logits. Ties rank the
// lower class index first.
double topk_accuracy(const nn::Matrix& logits, std::span<const int> labels, int k);

// Index of the row maximum, lowest index on ties.
int argmax_row(const nn::Matrix& m, nn::Index row);

}  // namespace egovideo::metrics
