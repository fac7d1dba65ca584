#include "egovideo/corpus/filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "egovideo/common/error.hpp"
#include "egovideo/common/rng.hpp"
#include "egovideo/corpus/vocabulary.hpp"

namespace egovideo::corpus {

FilterRules FilterRules::for_vocabulary(const Vocabulary& vocab) {
  FilterRules rules;
  for (size_t i = 2; i < vocab.tokens().size(); ++i) rules.vocabulary.insert(vocab.tokens()[i]);
  return rules;
}

void validate(const FilterRules& r) {
  require(r.min_tokens >= 1 && r.min_tokens <= r.max_tokens, "token bounds must satisfy 1 <= min <= max");
  require(r.min_vocab_fraction > 0.0 && r.min_vocab_fraction <= 1.0,
          "min_vocab_fraction must lie in (0, 1]");
  require(r.vocab_weight >= 0.0 && r.vocab_weight <= 1.0, "vocab_weight must lie in [0, 1]");
  require(r.duplicate_penalty >= 0.0 && r.duplicate_penalty < 1.0,
          "duplicate_penalty must lie in [0, 1)");
}

double score_pair(const ClipTextPair& pair, const FilterRules& rules, bool is_duplicate) {
  const auto words = tokenize_words(pair.caption);
  const int n = static_cast<int>(words.size());
  if (n < rules.min_tokens || n > rules.max_tokens) return 0.0;
  int known = 0;
  for (const auto& w : words) known += rules.vocabulary.contains(w) ? 1 : 0;
  const double fraction = static_cast<double>(known) / n;
  if (fraction < rules.min_vocab_fraction) return 0.0;
  double q = (1.0 - rules.vocab_weight) + rules.vocab_weight * fraction;
  if (is_duplicate) q *= 1.0 - rules.duplicate_penalty;
  return q;
}

std::vector<double> score_pairs(std::span<const ClipTextPair> pairs, const FilterRules& rules) {
  validate(rules);
  std::set<std::pair<std::string, std::string>> seen;
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    const bool dup = !seen.emplace(p.clip_id, p.caption).second;
    out.push_back(score_pair(p, rules, dup));
  }
  return out;
}

std::vector<ClipTextPair> select_corpus(std::span<const ClipTextPair> pairs,
                                        const SelectionOptions& options) {
  // Thresholds above 1 are accepted and simply select nothing.
  require(options.threshold >= 0.0, "threshold must be >= 0");
  for (const auto& [src, w] : options.mix_weights) {
    require(w >= 0.0, "mix weights must be nonnegative");
  }

  std::vector<size_t> kept;
  std::set<std::pair<std::string, std::string>> seen;
  for (size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].quality < options.threshold) continue;
    if (!seen.emplace(pairs[i].clip_id, pairs[i].caption).second) continue;
    kept.push_back(i);
  }

  if (!options.mix_weights.empty() && !kept.empty()) {
    double total = 0.0;
    for (const auto& [src, w] : options.mix_weights) total += w;
    require(total > 0.0, "mix weights must not all be zero");

    std::map<Source, std::vector<size_t>> by_source;
    for (size_t i : kept) by_source[pairs[i].source].push_back(i);

    // Largest total whose proportional shares every weighted source can fill.
    double n_total = std::numeric_limits<double>::infinity();
    for (const auto& [src, w] : options.mix_weights) {
      if (w <= 0.0) continue;
      const double available = static_cast<double>(by_source[src].size());
      n_total = std::min(n_total, std::floor(available / (w / total) + 1e-9));
    }

    std::vector<size_t> chosen;
    for (const auto& [src, indices] : by_source) {
      auto it = options.mix_weights.find(src);
      if (it == options.mix_weights.end() || it->second <= 0.0) continue;
      const auto want = static_cast<size_t>(
          std::min<double>(static_cast<double>(indices.size()),
                           std::floor(n_total * it->second / total + 0.5)));
      std::vector<size_t> pick = indices;
      if (want < pick.size()) {
        Rng rng(mix_seed(options.seed, static_cast<uint64_t>(src)));
        rng.shuffle(pick);
        pick.resize(want);
      }
      chosen.insert(chosen.end(), pick.begin(), pick.end());
    }
    std::sort(chosen.begin(), chosen.end());
    kept = std::move(chosen);
  }

  if (kept.empty() && options.require_nonempty) {
    throw InvalidArgument("empty corpus: no pair passed selection");
  }
  std::vector<ClipTextPair> out;
  out.reserve(kept.size());
  for (size_t i : kept) out.push_back(pairs[i]);
  return out;
}

}  // namespace egovideo::corpus
