#include "advtext/kn_lm.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "advtext/errors.hpp"

namespace advtext {

std::size_t KneserNeyLm::KeyHash::operator()(const Key& k) const noexcept {
  std::size_t h = 1469598103934665603ULL;
  for (std::uint32_t x : k) h = (h ^ x) * 1099511628211ULL;
  return h;
}

KneserNeyLm KneserNeyLm::train(std::span<const std::vector<std::string>> corpus, KneserNeyOptions options) {
  if (corpus.empty()) throw ContractError("language model needs a non-empty corpus");
  if (options.order < 1) throw ContractError("language model order must be at least 1");
  if (!(options.discount > 0.0 && options.discount < 1.0)) throw ContractError("discount must be in (0, 1)");

  std::map<std::string, std::size_t> freq;
  for (const auto& sentence : corpus) {
    for (const std::string& w : sentence) ++freq[w];
  }
  KneserNeyLm lm;
  lm.options_ = options;
  const auto keep = [&](const std::string& w) {
    return !(options.unk_singletons && freq.at(w) == 1) && w != kBos && w != kEos && w != kUnk;
  };
  for (const auto& [w, n] : freq) {
    if (keep(w)) lm.vocab_.push_back(w);
  }
  lm.vocab_.emplace_back(kUnk);
  lm.vocab_.emplace_back(kEos);
  for (std::uint32_t i = 0; i < lm.vocab_.size(); ++i) lm.ids_.emplace(lm.vocab_[i], i);
  lm.unk_ = lm.ids_.at(std::string(kUnk));
  lm.eos_ = lm.ids_.at(std::string(kEos));
  lm.bos_ = static_cast<std::uint32_t>(lm.vocab_.size());
  lm.ids_.emplace(std::string(kBos), lm.bos_);

  const std::size_t n = options.order;
  lm.levels_.resize(n);
  for (const auto& sentence : corpus) {
    Key padded(n - 1, lm.bos_);
    for (const std::string& w : sentence) padded.push_back(lm.id(w));
    padded.push_back(lm.eos_);
    for (std::size_t j = n - 1; j < padded.size(); ++j) {
      lm.levels_[n - 1].counts[Key(padded.begin() + static_cast<std::ptrdiff_t>(j + 1 - n),
                                   padded.begin() + static_cast<std::ptrdiff_t>(j + 1))] += 1.0;
    }
  }
  // Lower orders use continuation counts: distinct left extensions.
  for (std::size_t k = n - 1; k >= 1; --k) {
    for (const auto& [gram, count] : lm.levels_[k].counts) {
      lm.levels_[k - 1].counts[Key(gram.begin() + 1, gram.end())] += 1.0;
    }
  }
  for (Level& level : lm.levels_) {
    for (const auto& [gram, count] : level.counts) {
      const Key history(gram.begin(), gram.end() - 1);
      level.context_total[history] += count;
      level.context_types[history] += 1.0;
    }
  }
  return lm;
}

std::uint32_t KneserNeyLm::id(std::string_view word) const {
  const auto it = ids_.find(std::string(word));
  return it == ids_.end() ? unk_ : it->second;
}

double KneserNeyLm::prob(std::size_t order, const Key& history, std::uint32_t word) const {
  const double lower = order == 1 ? 1.0 / static_cast<double>(vocab_.size())
                                  : prob(order - 1, Key(history.begin() + 1, history.end()), word);
  const Level& level = levels_[order - 1];
  const auto total = level.context_total.find(history);
  if (total == level.context_total.end()) return lower;
  Key gram = history;
  gram.push_back(word);
  const auto it = level.counts.find(gram);
  const double count = it == level.counts.end() ? 0.0 : it->second;
  const double d = options_.discount;
  return std::max(count - d, 0.0) / total->second + d * level.context_types.at(history) / total->second * lower;
}

double KneserNeyLm::conditional_prob(std::span<const std::string> context, std::string_view word) const {
  if (word == kBos) return 0.0;
  const std::size_t h = options_.order - 1;
  Key history(h, bos_);
  const std::size_t take = std::min(h, context.size());
  for (std::size_t i = 0; i < take; ++i) history[h - take + i] = id(context[context.size() - take + i]);
  return prob(options_.order, history, id(word));
}

double KneserNeyLm::log_prob(std::span<const std::string> tokens) const {
  const std::size_t h = options_.order - 1;
  Key padded(h, bos_);
  for (const std::string& w : tokens) padded.push_back(id(w));
  padded.push_back(eos_);
  double total = 0.0;
  for (std::size_t j = h; j < padded.size(); ++j) {
    const Key history(padded.begin() + static_cast<std::ptrdiff_t>(j - h), padded.begin() + static_cast<std::ptrdiff_t>(j));
    total += std::log(prob(options_.order, history, padded[j]));
  }
  return total;
}

}  // namespace advtext
