#include "egovideo/corpus/vocabulary.hpp"

#include <algorithm>
#include <cctype>

#include "egovideo/common/error.hpp"
#include "egovideo/corpus/world.hpp"

namespace egovideo::corpus {

const std::vector<std::pair<std::string, std::string>>& verb_forms() {
  static const std::vector<std::pair<std::string, std::string>> kVerbs = {
      {"cuts", "cut"},   {"washes", "wash"}, {"opens", "open"},   {"closes", "close"},
      {"takes", "take"}, {"puts", "put"},    {"stirs", "stir"},   {"pours", "pour"},
      {"wipes", "wipe"}, {"peels", "peel"},  {"folds", "fold"},   {"mixes", "mix"},
      {"turns", "turn"}, {"holds", "hold"},  {"moves", "move"},   {"shakes", "shake"},
  };
  return kVerbs;
}

const std::vector<std::string>& noun_names() {
  static const std::vector<std::string> kNouns = {
      "tomato", "onion", "knife",  "bowl",   "pan",    "cup", "plate", "spoon",
      "bottle", "lid",   "towel",  "sponge", "drawer", "bag", "box",   "carrot",
  };
  return kNouns;
}

std::vector<std::string> tokenize_words(std::string_view caption) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : caption) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens, int num_verbs, int num_nouns)
    : tokens_(std::move(tokens)), num_verbs_(num_verbs), num_nouns_(num_nouns) {
  for (size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], static_cast<int>(i));
}

Vocabulary Vocabulary::for_world(const WorldConfig& config) {
  std::vector<std::string> tokens = {"[pad]", "[unk]"};
  auto add = [&tokens](const std::string& w) {
    if (std::find(tokens.begin(), tokens.end(), w) == tokens.end()) tokens.push_back(w);
  };
  for (const char* w : {"c", "the", "a"}) add(w);
  for (const auto& tmpl : config.caption_templates) {
    for (const auto& w : tokenize_words(tmpl)) {
      if (w.find('{') == std::string::npos) add(w);
    }
  }
  for (int v = 0; v < config.num_verbs; ++v) add(verb_forms()[static_cast<size_t>(v)].first);
  for (int v = 0; v < config.num_verbs; ++v) add(verb_forms()[static_cast<size_t>(v)].second);
  for (int n = 0; n < config.num_nouns; ++n) add(noun_names()[static_cast<size_t>(n)]);
  return Vocabulary(std::move(tokens), config.num_verbs, config.num_nouns);
}

int Vocabulary::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view word) const {
  return index_.contains(std::string(word));
}

std::vector<int> Vocabulary::encode(std::string_view caption, int max_len) const {
  std::vector<int> ids(static_cast<size_t>(max_len), kPad);
  const auto words = tokenize_words(caption);
  for (size_t i = 0; i < words.size() && i < ids.size(); ++i) ids[i] = id(words[i]);
  return ids;
}

std::optional<int> Vocabulary::verb_of(std::string_view word) const {
  for (int v = 0; v < num_verbs_; ++v) {
    const auto& [third, base] = verb_forms()[static_cast<size_t>(v)];
    if (word == third || word == base) return v;
  }
  return std::nullopt;
}

std::optional<int> Vocabulary::noun_of(std::string_view word) const {
  for (int n = 0; n < num_nouns_; ++n) {
    if (word == noun_names()[static_cast<size_t>(n)]) return n;
  }
  return std::nullopt;
}

Vocabulary::ParsedCaption Vocabulary::parse(std::string_view caption) const {
  ParsedCaption parsed;
  for (const auto& w : tokenize_words(caption)) {
    if (auto v = verb_of(w)) parsed.verbs.insert(*v);
    if (auto n = noun_of(w)) parsed.nouns.insert(*n);
  }
  return parsed;
}

}  // namespace egovideo::corpus
