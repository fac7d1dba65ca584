#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "egovideo/corpus/world.hpp"

namespace egovideo::corpus {

class Vocabulary;

// Stage-1 quality rules. A pair scores 0 iff a hard rule fails (token count
// outside [min_tokens, max_tokens], or in-vocabulary fraction below
// min_vocab_fraction). Otherwise
//   quality = ((1 - vocab_weight) + vocab_weight * vocab_fraction)
//             * (is_duplicate ? 1 - duplicate_penalty : 1)
// which is strictly positive.
struct FilterRules {
  int min_tokens = 2;
  int max_tokens = 16;
  double min_vocab_fraction = 0.25;
  double vocab_weight = 1.0;
  double duplicate_penalty = 0.5;
  std::unordered_set<std::string> vocabulary;

  static FilterRules for_vocabulary(const Vocabulary& vocab);
};

void validate(const FilterRules& rules);

double score_pair(const ClipTextPair& pair, const FilterRules& rules, bool is_duplicate = false);

// Scores every pair in order; a pair whose (clip_id, caption) already
// appeared earlier is scored as a duplicate.
std::vector<double> score_pairs(std::span<const ClipTextPair> pairs, const FilterRules& rules);

struct SelectionOptions {
  double threshold = 0.0;
  // Target share of the output per source. Empty keeps every source at its
  // natural count.
  std::map<Source, double> mix_weights;
  uint64_t seed = 0;
  bool require_nonempty = true;
};

// Threshold filter, exact-duplicate removal per clip (first occurrence kept),
// then proportional per-source subsampling. Output preserves input order.
std::vector<ClipTextPair> select_corpus(std::span<const ClipTextPair> pairs,
                                        const SelectionOptions& options);

}  // namespace egovideo::corpus
