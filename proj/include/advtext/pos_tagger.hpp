#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>

namespace advtext {

enum class CoarseTag { kNoun, kVerb, kAdj, kAdv, kPron, kDet, kAdp, kConj, kNum, kPunct, kOther };

std::string to_string(CoarseTag t);
CoarseTag parse_coarse_tag(std::string_view name);

// Lexicon lookup with suffix-rule fallback for unknown words.
class PosTagger {
 public:
  PosTagger() = default;
  // One `word TAG` pair per line; '#' starts a comment.
  static PosTagger load(const std::filesystem::path& path);

  void add(std::string word, CoarseTag tag);
  CoarseTag tag(std::string_view word) const;
  std::size_t lexicon_size() const { return lexicon_.size(); }

 private:
  std::unordered_map<std::string, CoarseTag> lexicon_;
};

}  // namespace advtext
