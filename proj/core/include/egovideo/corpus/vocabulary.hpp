#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace egovideo::corpus {

struct WorldConfig;

inline constexpr int kMaxVerbs = 16;
inline constexpr int kMaxNouns = 16;

// Third-person form, base form.
const std::vector<std::pair<std::string, std::string>>& verb_forms();
const std::vector<std::string>& noun_names();

// Lower-cases and splits on whitespace.
std::vector<std::string> tokenize_words(std::string_view caption);

// Closed word list of a world: [pad], [unk], template words, verb forms and
// nouns, in that order.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens, int num_verbs, int num_nouns);
  static Vocabulary for_world(const WorldConfig& config);

  int id(std::string_view word) const;
  bool contains(std::string_view word) const;
  // Token ids right-padded (or truncated) to max_len.
  std::vector<int> encode(std::string_view caption, int max_len) const;

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  int num_verbs() const { return num_verbs_; }
  int num_nouns() const { return num_nouns_; }

  std::optional<int> verb_of(std::string_view word) const;
  std::optional<int> noun_of(std::string_view word) const;

  struct ParsedCaption {
    std::set<int> verbs;
    std::set<int> nouns;
  };
  // Verb and noun ids mentioned in the caption.
  ParsedCaption parse(std::string_view caption) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  int num_verbs_ = 0;
  int num_nouns_ = 0;
};

}  // namespace egovideo::corpus
