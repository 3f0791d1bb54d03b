#include "advtext/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include "advtext/classifier.hpp"
#include "advtext/errors.hpp"
#include "advtext/kn_lm.hpp"

namespace advtext::harness {

using attacks::AttackConfig;
using attacks::AttackResult;
using attacks::FlipBudget;
using attacks::Method;
using nlohmann::json;

namespace {

double percent(std::size_t hits, std::size_t total) {
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(hits) / static_cast<double>(total);
}

struct TimedRun {
  std::vector<AttackResult> results;
  double seconds = 0.0;
};

TimedRun run_serial(Method method, const GradientModel& model, std::span<const corpus::Example> examples,
                    const AttackConfig& config, const attacks::TextFoolerResources& resources) {
  TimedRun run;
  const auto start = std::chrono::steady_clock::now();
  run.results = attacks::run_all(method, model, examples, config, resources, true);
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

bool uses_epsilon(Method m) { return m != Method::kHotFlip && m != Method::kTextFooler; }
bool uses_budget(Method m) { return m == Method::kTyc || m == Method::kHotFlip || m == Method::kTextFooler; }

}  // namespace

void validate_thresholds(std::span<const ThresholdSpec> thresholds) {
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    if (!(thresholds[i].target_acc < thresholds[i - 1].target_acc)) {
      throw ContractError("threshold targets must strictly decrease (" + thresholds[i - 1].name + " -> " +
                          thresholds[i].name + ")");
    }
  }
}

std::vector<double> log_space(double lo, double hi, std::size_t count) {
  if (!(lo > 0.0 && hi >= lo) || count == 0) throw ContractError("log_space needs 0 < lo <= hi and count >= 1");
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  const double a = std::log(lo), b = std::log(hi);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
  }
  out.back() = hi;
  return out;
}

std::vector<FlipBudget> default_budgets(bool fractional) {
  std::vector<FlipBudget> out;
  if (fractional) {
    for (int p = 10; p <= 100; p += 10) out.push_back(FlipBudget::fraction(p / 100.0));
  } else {
    for (std::size_t n = 1; n <= 7; ++n) out.push_back(FlipBudget::absolute(n));
  }
  return out;
}

std::vector<AttackConfig> make_grid(const AttackConfig& base, std::span<const double> epsilons,
                                    std::span<const FlipBudget> budgets) {
  const std::vector<double> eps = epsilons.empty() ? std::vector<double>{base.epsilon}
                                                   : std::vector<double>(epsilons.begin(), epsilons.end());
  const std::vector<FlipBudget> bud = budgets.empty() ? std::vector<FlipBudget>{base.max_flips}
                                                      : std::vector<FlipBudget>(budgets.begin(), budgets.end());
  std::vector<AttackConfig> grid;
  for (const FlipBudget& b : bud) {
    for (double e : eps) {
      AttackConfig c = base;
      c.epsilon = e;
      c.max_flips = b;
      c.validate();
      grid.push_back(c);
    }
  }
  return grid;
}

std::vector<GridEvaluation> evaluate_grid(Method method, const GradientModel& model,
                                          std::span<const corpus::Example> dev, std::span<const AttackConfig> grid,
                                          const attacks::TextFoolerResources& resources) {
  if (dev.empty()) throw ContractError("threshold search needs a non-empty dev split");
  std::vector<GridEvaluation> out;
  out.reserve(grid.size());
  for (const AttackConfig& config : grid) {
    const std::vector<AttackResult> results = attacks::run_all(method, model, dev, config, resources);
    std::size_t correct = 0;
    for (const AttackResult& r : results) correct += r.label_after == r.original_label;
    out.push_back({config, percent(correct, results.size())});
  }
  return out;
}

std::optional<std::size_t> select_config(std::span<const GridEvaluation> evaluations, double target,
                                         double tolerance) {
  std::optional<std::size_t> best;
  double best_distance = 0.0;
  for (std::size_t i = 0; i < evaluations.size(); ++i) {
    const double distance = std::abs(evaluations[i].dev_acc - target);
    if (!best || distance < best_distance) {
      best = i;
      best_distance = distance;
      continue;
    }
    if (distance > best_distance) continue;
    const AttackConfig& a = evaluations[i].config;
    const AttackConfig& b = evaluations[*best].config;
    if (a.max_flips.value() < b.max_flips.value() ||
        (a.max_flips.value() == b.max_flips.value() && a.epsilon < b.epsilon)) {
      best = i;
    }
  }
  if (!best || best_distance > tolerance) return std::nullopt;
  return best;
}

ThresholdOutcome threshold_report(Method method, const SearchContext& ctx,
                                  std::span<const GridEvaluation> evaluations, const ThresholdSpec& threshold) {
  ThresholdOutcome out;
  out.threshold = threshold;
  const std::optional<std::size_t> chosen = select_config(evaluations, threshold.target_acc, ctx.tolerance);
  if (!chosen) return out;
  out.config = evaluations[*chosen].config;
  out.dev_acc = evaluations[*chosen].dev_acc;
  if (ctx.test.empty()) throw ContractError("threshold search needs a non-empty test split");
  TimedRun run = run_serial(method, *ctx.model, ctx.test, *out.config, ctx.resources);
  out.seconds_per_example = run.seconds / static_cast<double>(ctx.test.size());
  out.test_results = std::move(run.results);
  if (ctx.encoder == nullptr || ctx.lm == nullptr) throw ContractError("threshold report needs an encoder and an LM");
  out.report = metrics::aggregate(out.test_results, *ctx.encoder, *ctx.lm);
  return out;
}

ThresholdOutcome threshold_search(Method method, const SearchContext& ctx, std::span<const AttackConfig> grid,
                                  const ThresholdSpec& threshold) {
  if (grid.empty()) throw ContractError("threshold search needs a non-empty grid");
  const std::vector<GridEvaluation> evaluations = evaluate_grid(method, *ctx.model, ctx.dev, grid, ctx.resources);
  return threshold_report(method, ctx, evaluations, threshold);
}

double transferability(std::span<const AttackResult> results, const ScoreModel& evaluator) {
  std::size_t correct = 0;
  for (const AttackResult& r : results) correct += evaluator.predict(r.adversarial).label == r.original_label;
  return percent(correct, results.size());
}

double baseline_accuracy(std::span<const AttackResult> results, const ScoreModel& evaluator) {
  std::size_t correct = 0;
  for (const AttackResult& r : results) correct += evaluator.predict(r.original).label == r.original_label;
  return percent(correct, results.size());
}

TimingResult timing(Method method, const GradientModel& model, std::span<const corpus::Example> examples,
                    const AttackConfig& config, const attacks::TextFoolerResources& resources) {
  TimingResult t;
  t.examples = examples.size();
  if (examples.empty()) return t;
  const TimedRun run = run_serial(method, model, examples, config, resources);
  t.total_seconds = run.seconds;
  t.seconds_per_example = run.seconds / static_cast<double>(examples.size());
  double q = 0.0;
  for (const AttackResult& r : run.results) q += static_cast<double>(r.queries);
  t.mean_queries = q / static_cast<double>(examples.size());
  return t;
}

std::string describe(Method method, const AttackConfig& config) {
  std::ostringstream out;
  char eps[32];
  std::snprintf(eps, sizeof eps, "%g", config.epsilon);
  if (uses_epsilon(method)) out << "eps=" << eps;
  if (uses_budget(method)) {
    if (uses_epsilon(method)) out << ' ';
    out << "flips=" << config.max_flips.to_string();
  }
  return out.str();
}

std::string render_csv(std::span<const BenchmarkRow> rows) {
  std::ostringstream out;
  out << "method,classifier,dataset,threshold,target,config,dev_acc,acc,bleu,sem,acpt,n_total,n_successful,"
         "mean_queries,sec_per_example\n";
  for (const BenchmarkRow& row : rows) {
    const auto& rep = row.report;
    const auto num = [](double v, int p) { return metrics::format_cell(v, p); };
    out << row.method << ',' << row.classifier << ',' << row.dataset << ',' << row.threshold << ','
        << num(row.target_acc, 1) << ',' << row.config << ',' << metrics::format_cell(row.dev_acc) << ','
        << (rep ? num(rep->acc, 1) : "--") << ',' << metrics::format_cell(rep ? rep->bleu : std::nullopt) << ','
        << metrics::format_cell(rep ? rep->sem : std::nullopt) << ','
        << metrics::format_cell(rep ? rep->acpt : std::nullopt, 2) << ','
        << (rep ? std::to_string(rep->n_total) : "--") << ','
        << (rep ? std::to_string(rep->n_successful) : "--") << ',' << (rep ? num(rep->mean_queries, 1) : "--")
        << ',' << (rep ? num(row.seconds_per_example, 6) : "--") << '\n';
  }
  return out.str();
}

json render_json(std::span<const BenchmarkRow> rows) {
  json out = json::array();
  for (const BenchmarkRow& row : rows) {
    json j{{"method", row.method},
           {"classifier", row.classifier},
           {"dataset", row.dataset},
           {"threshold", row.threshold},
           {"target_acc", row.target_acc},
           {"achievable", row.report.has_value()},
           {"config", row.report ? json(row.config) : json(nullptr)},
           {"dev_acc", row.dev_acc ? json(*row.dev_acc) : json(nullptr)},
           {"sec_per_example", row.report ? json(row.seconds_per_example) : json(nullptr)}};
    j["metrics"] = row.report ? metrics::to_json(*row.report) : json(nullptr);
    out.push_back(std::move(j));
  }
  return out;
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const json& entry, const char* key,
                              const std::string& what) {
  if (!entry.contains(key)) throw ManifestError(what + ": missing '" + key + "'");
  std::filesystem::path p = entry.at(key).get<std::string>();
  if (p.is_relative()) p = base / p;
  if (!std::filesystem::exists(p)) throw ManifestError(what + ": '" + p.string() + "' does not exist");
  return p;
}

struct LoadedDataset {
  std::string name;
  corpus::SplitResult splits;
  std::shared_ptr<const EmbeddingTable> table;
  std::unique_ptr<EmbeddingTable> counterfit;
  PosTagger tagger;
  std::unique_ptr<MeanEmbeddingEncoder> encoder;
  std::unique_ptr<KneserNeyLm> lm;
  std::vector<ThresholdSpec> thresholds;
};

struct LoadedClassifier {
  std::string name;
  std::size_t dataset = 0;
  std::unique_ptr<Classifier> model;
};

AttackConfig base_config(const json& j) {
  AttackConfig c;
  c.epsilon = j.value("epsilon", c.epsilon);
  c.n_steps = j.value("n_steps", c.n_steps);
  c.beam_width = j.value("beam_width", c.beam_width);
  c.candidate_k = j.value("candidate_k", c.candidate_k);
  c.min_word_cosine = j.value("min_word_cosine", c.min_word_cosine);
  c.min_sentence_sim = j.value("min_sentence_sim", c.min_sentence_sim);
  c.seed = j.value("seed", c.seed);
  if (j.contains("max_flips")) c.max_flips = FlipBudget::parse(j.at("max_flips").get<std::string>());
  c.validate();
  return c;
}

std::vector<AttackConfig> method_grid(Method method, const json& entry, const AttackConfig& base) {
  std::vector<double> eps;
  std::vector<FlipBudget> budgets;
  if (entry.contains("epsilons")) {
    eps = entry.at("epsilons").get<std::vector<double>>();
  } else if (uses_epsilon(method) && method != Method::kTyc) {
    eps = log_space(0.01, 10.0, 13);
  }
  if (entry.contains("budgets")) {
    for (const auto& b : entry.at("budgets")) budgets.push_back(FlipBudget::parse(b.get<std::string>()));
  } else if (uses_budget(method)) {
    budgets = default_budgets(method == Method::kTyc);
  }
  return make_grid(base, eps, budgets);
}

}  // namespace

SuiteOutput run_suite(const std::filesystem::path& manifest_path, const std::filesystem::path& out_dir) {
  std::ifstream in(manifest_path);
  if (!in) throw ManifestError("cannot open manifest " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ManifestError("manifest is not valid JSON: " + std::string(e.what()));
  }
  const std::filesystem::path base = manifest_path.parent_path();
  const double tolerance = manifest.value("tolerance", kDefaultTolerance);
  const AttackConfig defaults = base_config(manifest.value("attack", json::object()));

  std::vector<LoadedDataset> datasets;
  for (const json& d : manifest.at("datasets")) {
    LoadedDataset ds;
    ds.name = d.at("name").get<std::string>();
    const std::string what = "dataset '" + ds.name + "'";
    ds.splits = corpus::load_splits(resolve(base, d, "data", what));
    ds.table = std::make_shared<const EmbeddingTable>(EmbeddingTable::load(resolve(base, d, "embeddings", what)));
    if (d.contains("counterfit")) {
      ds.counterfit = std::make_unique<EmbeddingTable>(EmbeddingTable::load(resolve(base, d, "counterfit", what)));
    }
    if (d.contains("pos_lexicon")) ds.tagger = PosTagger::load(resolve(base, d, "pos_lexicon", what));
    ds.encoder = std::make_unique<MeanEmbeddingEncoder>(ds.table);
    std::vector<std::vector<std::string>> sentences;
    for (const auto& e : ds.splits.train) sentences.push_back(e.tokens);
    ds.lm = std::make_unique<KneserNeyLm>(KneserNeyLm::train(sentences));
    for (const json& t : d.at("thresholds")) {
      ds.thresholds.push_back({t.at("name").get<std::string>(), t.at("target").get<double>()});
    }
    validate_thresholds(ds.thresholds);
    datasets.push_back(std::move(ds));
  }
  const auto dataset_index = [&](const std::string& name, const std::string& what) {
    for (std::size_t i = 0; i < datasets.size(); ++i) {
      if (datasets[i].name == name) return i;
    }
    throw ManifestError(what + ": unknown dataset '" + name + "'");
  };

  std::vector<LoadedClassifier> classifiers;
  for (const json& c : manifest.at("classifiers")) {
    LoadedClassifier lc;
    lc.name = c.at("name").get<std::string>();
    const std::string what = "classifier '" + lc.name + "'";
    lc.dataset = dataset_index(c.at("dataset").get<std::string>(), what);
    lc.model = std::make_unique<Classifier>(
        load_checkpoint(resolve(base, c, "checkpoint", what), datasets[lc.dataset].table));
    classifiers.push_back(std::move(lc));
  }

  struct MethodEntry {
    Method method;
    json spec;
  };
  std::vector<MethodEntry> methods;
  for (const json& m : manifest.at("methods")) {
    methods.push_back({attacks::parse_method(m.at("name").get<std::string>()), m});
  }

  SuiteOutput output;
  // (dataset, method, classifier) -> outcomes per threshold, kept for transfer.
  std::map<std::tuple<std::size_t, std::string, std::string>, std::vector<ThresholdOutcome>> outcomes;
  for (const LoadedClassifier& lc : classifiers) {
    LoadedDataset& ds = datasets[lc.dataset];
    for (const MethodEntry& me : methods) {
      if (me.method == Method::kTextFooler && !ds.counterfit) {
        throw ManifestError("dataset '" + ds.name + "': textfooler needs a 'counterfit' table");
      }
      SearchContext ctx;
      ctx.model = lc.model.get();
      ctx.dev = ds.splits.dev;
      ctx.test = ds.splits.test;
      ctx.resources = {ds.counterfit.get(), ds.encoder.get(), &ds.tagger};
      ctx.encoder = ds.encoder.get();
      ctx.lm = ds.lm.get();
      ctx.tolerance = tolerance;
      const std::vector<AttackConfig> grid = method_grid(me.method, me.spec, defaults);
      const std::vector<GridEvaluation> evaluations =
          evaluate_grid(me.method, *lc.model, ds.splits.dev, grid, ctx.resources);
      auto& kept = outcomes[{lc.dataset, attacks::to_string(me.method), lc.name}];
      for (const ThresholdSpec& t : ds.thresholds) {
        ThresholdOutcome outcome = threshold_report(me.method, ctx, evaluations, t);
        BenchmarkRow row;
        row.method = attacks::to_string(me.method);
        row.classifier = lc.name;
        row.dataset = ds.name;
        row.threshold = t.name;
        row.target_acc = t.target_acc;
        row.config = outcome.config ? describe(me.method, *outcome.config) : "--";
        if (outcome.config) row.dev_acc = outcome.dev_acc;
        row.report = outcome.report;
        row.seconds_per_example = outcome.seconds_per_example;
        output.rows.push_back(std::move(row));
        kept.push_back(std::move(outcome));
      }
    }
  }

  json transfer = json::object();
  if (manifest.contains("transfer")) {
    const json& tspec = manifest.at("transfer");
    for (std::size_t di = 0; di < datasets.size(); ++di) {
      const LoadedDataset& ds = datasets[di];
      const std::string threshold = tspec.value("threshold", ds.thresholds.empty() ? "" : ds.thresholds[0].name);
      json dj = json::object();
      json baseline = json::object();
      for (const LoadedClassifier& ev : classifiers) {
        if (ev.dataset != di) continue;
        std::size_t correct = 0;
        for (const auto& e : ds.splits.test) correct += ev.model->predict(e.tokens).label == e.label;
        baseline[ev.name] = percent(correct, ds.splits.test.size());
      }
      dj["baseline"] = baseline;
      for (const auto& mname : tspec.at("methods")) {
        const std::string method = mname.get<std::string>();
        json mj = json::object();
        for (const LoadedClassifier& gen : classifiers) {
          if (gen.dataset != di) continue;
          const auto it = outcomes.find({di, method, gen.name});
          if (it == outcomes.end()) throw ManifestError("transfer method '" + method + "' was not run");
          const ThresholdOutcome* chosen = nullptr;
          for (const ThresholdOutcome& o : it->second) {
            if (o.threshold.name == threshold) chosen = &o;
          }
          json gj = json::object();
          if (chosen != nullptr && chosen->report) {
            gj["attacked_acc"] = chosen->report->acc;
            for (const LoadedClassifier& ev : classifiers) {
              if (ev.dataset == di) gj[ev.name] = transferability(chosen->test_results, *ev.model);
            }
          } else {
            gj["attacked_acc"] = nullptr;
          }
          mj[gen.name] = gj;
        }
        dj[method] = mj;
      }
      dj["threshold"] = threshold;
      transfer[ds.name] = dj;
    }
  }
  output.transfer = transfer;

  std::filesystem::create_directories(out_dir);
  std::ofstream(out_dir / "report.csv") << render_csv(output.rows);
  std::ofstream(out_dir / "report.json") << render_json(output.rows).dump(2) << '\n';
  std::ofstream(out_dir / "transfer.json") << transfer.dump(2) << '\n';
  return output;
}

}  // namespace advtext::harness
