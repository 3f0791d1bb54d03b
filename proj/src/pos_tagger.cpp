#include "advtext/pos_tagger.hpp"

#include <array>
#include <fstream>
#include <sstream>

#include "advtext/errors.hpp"

namespace advtext {

namespace {

constexpr std::array<std::pair<CoarseTag, std::string_view>, 11> kNames{{
    {CoarseTag::kNoun, "NOUN"},
    {CoarseTag::kVerb, "VERB"},
    {CoarseTag::kAdj, "ADJ"},
    {CoarseTag::kAdv, "ADV"},
    {CoarseTag::kPron, "PRON"},
    {CoarseTag::kDet, "DET"},
    {CoarseTag::kAdp, "ADP"},
    {CoarseTag::kConj, "CONJ"},
    {CoarseTag::kNum, "NUM"},
    {CoarseTag::kPunct, "PUNCT"},
    {CoarseTag::kOther, "X"},
}};

bool ends_with(std::string_view w, std::string_view suffix) {
  return w.size() > suffix.size() + 1 && w.substr(w.size() - suffix.size()) == suffix;
}

bool is_ascii_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return (u >= 33 && u <= 47) || (u >= 58 && u <= 64) || (u >= 91 && u <= 96) || (u >= 123 && u <= 126);
}

}  // namespace

std::string to_string(CoarseTag t) {
  for (const auto& [tag, name] : kNames) {
    if (tag == t) return std::string(name);
  }
  return "X";
}

CoarseTag parse_coarse_tag(std::string_view name) {
  for (const auto& [tag, n] : kNames) {
    if (n == name) return tag;
  }
  throw FormatError("unknown part-of-speech tag '" + std::string(name) + "'");
}

PosTagger PosTagger::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open POS lexicon " + path.string());
  PosTagger tagger;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string word, tag;
    if (!(fields >> word)) continue;
    if (!(fields >> tag)) throw FormatError("POS lexicon line " + std::to_string(line_no) + " has no tag");
    tagger.lexicon_.emplace(std::move(word), parse_coarse_tag(tag));
  }
  return tagger;
}

void PosTagger::add(std::string word, CoarseTag tag) { lexicon_[std::move(word)] = tag; }

CoarseTag PosTagger::tag(std::string_view word) const {
  if (const auto it = lexicon_.find(std::string(word)); it != lexicon_.end()) return it->second;
  if (word.empty()) return CoarseTag::kOther;
  bool all_punct = true, all_digit = true;
  for (char c : word) {
    all_punct = all_punct && is_ascii_punct(c);
    all_digit = all_digit && (c >= '0' && c <= '9');
  }
  if (all_punct) return CoarseTag::kPunct;
  if (all_digit) return CoarseTag::kNum;
  if (ends_with(word, "ly")) return CoarseTag::kAdv;
  if (ends_with(word, "ing") || ends_with(word, "ed")) return CoarseTag::kVerb;
  for (std::string_view s : {"ous", "ful", "able", "ible", "ive", "less", "al", "ic"}) {
    if (ends_with(word, s)) return CoarseTag::kAdj;
  }
  return CoarseTag::kNoun;
}

}  // namespace advtext
