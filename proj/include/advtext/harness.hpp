#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "advtext/attacks.hpp"
#include "advtext/metrics.hpp"

namespace advtext::harness {

struct ThresholdSpec {
  std::string name;
  double target_acc = 0.0;  // percentage
};

// Throws ContractError unless targets strictly decrease.
void validate_thresholds(std::span<const ThresholdSpec> thresholds);

inline constexpr double kDefaultTolerance = 5.0;

// `count` log-spaced values from lo to hi inclusive.
std::vector<double> log_space(double lo, double hi, std::size_t count);
// Absolute budgets 1..7 or fractions 10%..100%.
std::vector<attacks::FlipBudget> default_budgets(bool fractional);
// Cartesian product of epsilons and budgets over a base config.
std::vector<attacks::AttackConfig> make_grid(const attacks::AttackConfig& base, std::span<const double> epsilons,
                                             std::span<const attacks::FlipBudget> budgets);

struct GridEvaluation {
  attacks::AttackConfig config;
  double dev_acc = 0.0;
};

std::vector<GridEvaluation> evaluate_grid(attacks::Method method, const GradientModel& model,
                                          std::span<const corpus::Example> dev,
                                          std::span<const attacks::AttackConfig> grid,
                                          const attacks::TextFoolerResources& resources = {});

// Index of the grid point whose dev ACC is closest to `target`; ties prefer
// the smaller budget, then the smaller epsilon. nullopt when the closest is
// farther than `tolerance`.
std::optional<std::size_t> select_config(std::span<const GridEvaluation> evaluations, double target,
                                         double tolerance = kDefaultTolerance);

struct ThresholdOutcome {
  ThresholdSpec threshold;
  std::optional<attacks::AttackConfig> config;  // absent when unachievable
  double dev_acc = 0.0;
  std::vector<attacks::AttackResult> test_results;
  std::optional<metrics::MetricsReport> report;
  double seconds_per_example = 0.0;
};

struct SearchContext {
  const GradientModel* model = nullptr;
  std::span<const corpus::Example> dev;
  std::span<const corpus::Example> test;
  attacks::TextFoolerResources resources;
  const SentenceEncoder* encoder = nullptr;
  const LanguageModel* lm = nullptr;
  double tolerance = kDefaultTolerance;
};

// Dev-split search over `grid`, then a single-threaded, timed test-split run
// of the chosen config.
ThresholdOutcome threshold_search(attacks::Method method, const SearchContext& ctx,
                                  std::span<const attacks::AttackConfig> grid, const ThresholdSpec& threshold);
// Same, reusing dev evaluations already computed for the grid.
ThresholdOutcome threshold_report(attacks::Method method, const SearchContext& ctx,
                                  std::span<const GridEvaluation> evaluations, const ThresholdSpec& threshold);

// Percentage of `results` whose adversarial text `evaluator` labels with the
// gold label. Every result counts, successful or not.
double transferability(std::span<const attacks::AttackResult> results, const ScoreModel& evaluator);
// Percentage accuracy of `evaluator` on the unmodified inputs.
double baseline_accuracy(std::span<const attacks::AttackResult> results, const ScoreModel& evaluator);

struct TimingResult {
  std::size_t examples = 0;
  double total_seconds = 0.0;
  double seconds_per_example = 0.0;
  double mean_queries = 0.0;
};
// Attacks `examples` on the calling thread only.
TimingResult timing(attacks::Method method, const GradientModel& model, std::span<const corpus::Example> examples,
                    const attacks::AttackConfig& config, const attacks::TextFoolerResources& resources = {});

struct BenchmarkRow {
  std::string method;
  std::string classifier;
  std::string dataset;
  std::string threshold;
  double target_acc = 0.0;
  std::string config;  // "--" when unachievable
  std::optional<double> dev_acc;
  std::optional<metrics::MetricsReport> report;
  double seconds_per_example = 0.0;
};

struct SuiteOutput {
  std::vector<BenchmarkRow> rows;
  nlohmann::json transfer;
};

// Short human-readable form of the searched parameters, e.g. "eps=0.5 flips=2".
std::string describe(attacks::Method method, const attacks::AttackConfig& config);

std::string render_csv(std::span<const BenchmarkRow> rows);
nlohmann::json render_json(std::span<const BenchmarkRow> rows);

// Runs every classifier x method x threshold in the manifest and writes
// report.csv, report.json and transfer.json into `out_dir`. Paths in the
// manifest are relative to its directory. Throws ManifestError naming the
// entry when a referenced file is missing.
SuiteOutput run_suite(const std::filesystem::path& manifest, const std::filesystem::path& out_dir);

}  // namespace advtext::harness
