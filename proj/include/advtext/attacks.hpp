#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "advtext/corpus.hpp"
#include "advtext/model.hpp"
#include "advtext/pos_tagger.hpp"
#include "advtext/text_models.hpp"

namespace advtext::attacks {

enum class Method { kFgm, kFgvm, kDeepFool, kTyc, kHotFlip, kTextFooler };

std::string to_string(Method m);
Method parse_method(std::string_view name);
bool is_white_box(Method m);
inline constexpr Method kAllMethods[] = {Method::kFgm, Method::kFgvm, Method::kDeepFool,
                                         Method::kTyc, Method::kHotFlip, Method::kTextFooler};

// Absolute number of flips or a fraction of the sequence length.
class FlipBudget {
 public:
  static FlipBudget absolute(std::size_t n);
  static FlipBudget fraction(double f);
  // "3" is absolute; "10%" or "0.1" is a fraction.
  static FlipBudget parse(std::string_view text);

  bool is_fraction() const { return fraction_; }
  double value() const { return value_; }
  // Flips allowed on a sequence of `length` tokens; fractions round up.
  std::size_t resolve(std::size_t length) const;
  std::string to_string() const;
  bool operator==(const FlipBudget&) const = default;

 private:
  bool fraction_ = false;
  double value_ = 1.0;
};

struct AttackConfig {
  double epsilon = 1.0;
  std::size_t n_steps = 5;
  FlipBudget max_flips = FlipBudget::absolute(1);
  std::size_t beam_width = 1;
  std::size_t candidate_k = 50;
  double min_word_cosine = 0.7;
  double min_sentence_sim = 0.8;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AttackResult {
  std::string id;
  Method method = Method::kFgm;
  std::vector<std::string> original;
  std::vector<std::string> adversarial;
  Label original_label = Label::kNegative;
  Label label_before = Label::kNegative;
  Label label_after = Label::kNegative;
  bool attacked = false;  // false when the input was already misclassified
  bool success = false;
  std::size_t flips = 0;
  std::size_t queries = 0;
  double wall_time = 0.0;
  std::string status;  // ok, misclassified, zero-gradient, degenerate-gradient, no-candidates
};

// Black-box inputs for TextFooler.
struct TextFoolerResources {
  const EmbeddingTable* counterfit = nullptr;
  const SentenceEncoder* encoder = nullptr;
  const PosTagger* tagger = nullptr;
};

AttackResult fgm(const GradientModel& model, const corpus::Example& example, const AttackConfig& config);
AttackResult fgvm(const GradientModel& model, const corpus::Example& example, const AttackConfig& config);
AttackResult deepfool(const GradientModel& model, const corpus::Example& example, const AttackConfig& config);
AttackResult tyc(const GradientModel& model, const corpus::Example& example, const AttackConfig& config);
AttackResult hotflip(const GradientModel& model, const corpus::Example& example, const AttackConfig& config);
AttackResult textfooler(const ScoreModel& model, const corpus::Example& example, const AttackConfig& config,
                        const TextFoolerResources& resources);

// Dispatches on `method`; TextFooler sees `model` only through ScoreModel.
AttackResult run_attack(Method method, const GradientModel& model, const corpus::Example& example,
                        const AttackConfig& config, const TextFoolerResources& resources = {});

// Attacks every example, in parallel unless `serial`. Output order follows input.
std::vector<AttackResult> run_all(Method method, const GradientModel& model,
                                  std::span<const corpus::Example> examples, const AttackConfig& config,
                                  const TextFoolerResources& resources = {}, bool serial = false);

// Pieces exposed for testing.

// n gradient steps from `rows` (sign updates when `use_sign`, otherwise
// L2-normalised updates). Stops early on a zero gradient; `steps_taken`
// reports how many updates were applied.
Tensor gradient_perturb(const GradientModel& model, const Tensor& rows, Label label, const AttackConfig& config,
                        bool use_sign, std::size_t* queries, std::size_t* steps_taken = nullptr);

// Final DeepFool point x0 + (1 + epsilon) * r_total.
struct DeepFoolTrace {
  Tensor perturbed;
  std::size_t iterations = 0;
  bool degenerate = false;
};
DeepFoolTrace deepfool_perturb(const GradientModel& model, const Tensor& rows, Label label,
                               const AttackConfig& config, std::size_t* queries);

// Linearised loss change (e_w - e_{x_i}) . grad_i for every position i and
// vocabulary row w: an L x |V| matrix.
Tensor hotflip_scores(const EmbeddingTable& table, const Tensor& rows, const Tensor& gradient,
                      kernels::Backend backend = kernels::Backend::kParallel);

struct FlipChoice {
  std::size_t position = 0;
  std::size_t word = 0;
  double score = 0.0;
};
// Highest-scoring flip that changes the word and leaves `frozen` positions
// alone; ties go to the lower position, then the lower vocabulary row.
std::optional<FlipChoice> hotflip_best(const Tensor& scores, std::span<const std::string> tokens,
                                       const EmbeddingTable& table, std::span<const std::uint8_t> frozen);
// Up to k best flips in the same order.
std::vector<FlipChoice> hotflip_top(const Tensor& scores, std::span<const std::string> tokens,
                                    const EmbeddingTable& table, std::span<const std::uint8_t> frozen,
                                    std::size_t k);

// Per-position L2 norms of the loss gradient.
std::vector<double> tyc_vulnerability(const Tensor& gradient);

// Sentence with position i removed; a single-token sentence becomes <unk>.
std::vector<std::string> delete_token(std::span<const std::string> tokens, std::size_t i);

std::size_t hamming(std::span<const std::string> a, std::span<const std::string> b);

nlohmann::json to_json(const AttackResult& r);
AttackResult result_from_json(const nlohmann::json& j);
void write_results(const std::filesystem::path& path, std::span<const AttackResult> results);
std::vector<AttackResult> read_results(const std::filesystem::path& path);

}  // namespace advtext::attacks
