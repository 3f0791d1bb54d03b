#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "advtext/attacks.hpp"
#include "advtext/text_models.hpp"

namespace advtext::metrics {

inline constexpr double kAcceptabilityAlpha = 0.8;

// Sentence BLEU x100 over 1..4-grams with +1 smoothing of zero-count higher
// orders and the usual brevity penalty. Empty candidate scores 0.
double bleu(std::span<const std::string> reference, std::span<const std::string> candidate);

// 100 x cosine of the two encodings. Throws ContractError when either
// encoding is the zero vector.
double sem(std::span<const std::string> original, std::span<const std::string> adversarial,
           const SentenceEncoder& encoder);

// log P(s) / ((5 + |s|) / 6)^alpha. Throws ContractError on a positive log P.
double acceptability(std::span<const std::string> sentence, const LanguageModel& lm,
                     double alpha = kAcceptabilityAlpha);
double acpt(std::span<const std::string> original, std::span<const std::string> adversarial,
            const LanguageModel& lm);

struct MetricsReport {
  double acc = 0.0;  // percentage
  std::optional<double> bleu;
  std::optional<double> sem;
  std::optional<double> acpt;
  std::size_t n_total = 0;
  std::size_t n_successful = 0;
  double mean_queries = 0.0;
  double mean_wall_time = 0.0;
};

// ACC counts initially misclassified inputs as errors; bleu/sem/acpt are
// means over successful attacks only and absent when there are none.
MetricsReport aggregate(std::span<const attacks::AttackResult> results, const SentenceEncoder& encoder,
                        const LanguageModel& lm);

// "--" for an absent value, otherwise fixed with `precision` decimals.
std::string format_cell(const std::optional<double>& value, int precision = 1);
nlohmann::json to_json(const MetricsReport& report);

}  // namespace advtext::metrics
