#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "advtext/text_models.hpp"

namespace advtext {

struct KneserNeyOptions {
  std::size_t order = 3;
  double discount = 0.75;
  // Map words seen once in training to <unk>.
  bool unk_singletons = true;
};

// Interpolated Kneser-Ney n-gram model. Sentences are padded with order-1
// <s> markers and terminated by </s>; the lowest order interpolates with a
// uniform distribution over the vocabulary, which includes <unk> and </s>.
class KneserNeyLm final : public LanguageModel {
 public:
  static constexpr std::string_view kBos = "<s>";
  static constexpr std::string_view kEos = "</s>";
  static constexpr std::string_view kUnk = "<unk>";

  static KneserNeyLm train(std::span<const std::vector<std::string>> corpus, KneserNeyOptions options = {});

  double log_prob(std::span<const std::string> tokens) const override;
  // P(word | context); only the last order-1 context words are used and short
  // contexts are padded with <s>.
  double conditional_prob(std::span<const std::string> context, std::string_view word) const;

  // Predictable words: the training vocabulary plus <unk> and </s>.
  const std::vector<std::string>& vocabulary() const { return vocab_; }
  const KneserNeyOptions& options() const { return options_; }

 private:
  using Key = std::vector<std::uint32_t>;
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept;
  };
  struct Level {
    std::unordered_map<Key, double, KeyHash> counts;        // n-gram -> (continuation) count
    std::unordered_map<Key, double, KeyHash> context_total;  // history -> sum of counts
    std::unordered_map<Key, double, KeyHash> context_types;  // history -> distinct followers
  };

  std::uint32_t id(std::string_view word) const;
  double prob(std::size_t order, const Key& history, std::uint32_t word) const;

  KneserNeyOptions options_;
  std::unordered_map<std::string, std::uint32_t> ids_;
  std::vector<std::string> vocab_;
  std::uint32_t bos_ = 0;
  std::uint32_t eos_ = 0;
  std::uint32_t unk_ = 0;
  std::vector<Level> levels_;  // levels_[k - 1] holds k-grams
};

}  // namespace advtext
