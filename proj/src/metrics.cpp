#include "advtext/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <map>

#include "advtext/errors.hpp"

namespace advtext {

std::vector<double> MeanEmbeddingEncoder::encode(std::span<const std::string> tokens) const {
  std::vector<double> code(table_->dimension(), 0.0);
  for (const std::string& t : tokens) {
    const std::vector<double> v = table_->lookup(t);
    for (std::size_t k = 0; k < code.size(); ++k) code[k] += v[k];
  }
  double norm = 0.0;
  for (double x : code) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) return code;
  for (double& x : code) x /= norm;
  return code;
}

double cosine_or_zero(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine of vectors with different lengths");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace advtext

namespace advtext::metrics {

namespace {

using NGramCounts = std::map<std::vector<std::string>, std::size_t>;

NGramCounts ngrams(std::span<const std::string> tokens, std::size_t n) {
  NGramCounts counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

}  // namespace

double bleu(std::span<const std::string> reference, std::span<const std::string> candidate) {
  if (reference.empty()) throw ContractError("bleu needs a non-empty reference");
  if (candidate.empty()) return 0.0;
  constexpr std::size_t kMaxOrder = 4;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= kMaxOrder; ++n) {
    const NGramCounts cand = ngrams(candidate, n);
    const NGramCounts ref = ngrams(reference, n);
    const double total = candidate.size() >= n ? static_cast<double>(candidate.size() - n + 1) : 0.0;
    double matched = 0.0;
    for (const auto& [gram, count] : cand) {
      if (const auto it = ref.find(gram); it != ref.end()) matched += static_cast<double>(std::min(count, it->second));
    }
    double precision = 0.0;
    if (matched > 0.0) {
      precision = matched / total;
    } else if (n >= 2) {
      precision = 1.0 / (total + 1.0);
    } else {
      return 0.0;
    }
    log_sum += std::log(precision) / static_cast<double>(kMaxOrder);
  }
  const double c = static_cast<double>(candidate.size());
  const double r = static_cast<double>(reference.size());
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return 100.0 * bp * std::exp(log_sum);
}

double sem(std::span<const std::string> original, std::span<const std::string> adversarial,
           const SentenceEncoder& encoder) {
  if (original.empty() || adversarial.empty()) throw ContractError("sem needs non-empty sentences");
  const std::vector<double> a = encoder.encode(original);
  const std::vector<double> b = encoder.encode(adversarial);
  const auto zero = [](const std::vector<double>& v) {
    for (double x : v) {
      if (x != 0.0) return false;
    }
    return true;
  };
  if (zero(a) || zero(b)) throw ContractError("sem undefined for a zero-vector encoding");
  return 100.0 * cosine_or_zero(a, b);
}

double acceptability(std::span<const std::string> sentence, const LanguageModel& lm, double alpha) {
  if (sentence.empty()) throw ContractError("acceptability needs a non-empty sentence");
  const double log_p = lm.log_prob(sentence);
  if (log_p > 0.0) throw ContractError("language model returned a positive log-probability");
  const double length_norm = std::pow((5.0 + static_cast<double>(sentence.size())) / 6.0, alpha);
  return log_p / length_norm;
}

double acpt(std::span<const std::string> original, std::span<const std::string> adversarial,
            const LanguageModel& lm) {
  return acceptability(adversarial, lm) - acceptability(original, lm);
}

MetricsReport aggregate(std::span<const attacks::AttackResult> results, const SentenceEncoder& encoder,
                        const LanguageModel& lm) {
  MetricsReport report;
  report.n_total = results.size();
  if (results.empty()) return report;
  std::size_t correct = 0;
  double bleu_sum = 0.0, sem_sum = 0.0, acpt_sum = 0.0, queries = 0.0, wall = 0.0;
  for (const attacks::AttackResult& r : results) {
    if (r.label_after == r.original_label) ++correct;
    queries += static_cast<double>(r.queries);
    wall += r.wall_time;
    if (!r.success) continue;
    ++report.n_successful;
    bleu_sum += bleu(r.original, r.adversarial);
    sem_sum += sem(r.original, r.adversarial, encoder);
    acpt_sum += acpt(r.original, r.adversarial, lm);
  }
  const double n = static_cast<double>(results.size());
  report.acc = 100.0 * static_cast<double>(correct) / n;
  report.mean_queries = queries / n;
  report.mean_wall_time = wall / n;
  if (report.n_successful > 0) {
    const double s = static_cast<double>(report.n_successful);
    report.bleu = bleu_sum / s;
    report.sem = sem_sum / s;
    report.acpt = acpt_sum / s;
  }
  return report;
}

std::string format_cell(const std::optional<double>& value, int precision) {
  if (!value) return "--";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, *value);
  return buf;
}

nlohmann::json to_json(const MetricsReport& report) {
  const auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"acc", report.acc},
          {"bleu", opt(report.bleu)},
          {"sem", opt(report.sem)},
          {"acpt", opt(report.acpt)},
          {"n_total", report.n_total},
          {"n_successful", report.n_successful},
          {"mean_queries", report.mean_queries},
          {"mean_wall_time", report.mean_wall_time}};
}

}  // namespace advtext::metrics
