#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <json.hpp>

#include "advtext/attacks.hpp"
#include "advtext/classifier.hpp"
#include "advtext/corpus.hpp"
#include "advtext/embeddings.hpp"
#include "advtext/errors.hpp"
#include "advtext/harness.hpp"
#include "advtext/humaneval.hpp"
#include "advtext/humaneval_http.hpp"
#include "advtext/kn_lm.hpp"
#include "advtext/metrics.hpp"
#include "advtext/pos_tagger.hpp"
#include "advtext/synthetic.hpp"
#include "advtext/text_models.hpp"

namespace fs = std::filesystem;
using namespace advtext;
using nlohmann::json;

namespace {

std::shared_ptr<const EmbeddingTable> load_table(const fs::path& path) {
  return std::make_shared<const EmbeddingTable>(EmbeddingTable::load(path));
}

// Explicit --embeddings, else the path recorded in the checkpoint.
fs::path table_for(const fs::path& ckpt, const std::string& explicit_path) {
  if (!explicit_path.empty()) return explicit_path;
  const std::string hint = checkpoint_table_hint(ckpt);
  if (hint.empty()) throw ContractError("checkpoint records no embedding table; pass --embeddings");
  return hint;
}

std::vector<corpus::Example> select_split(const corpus::SplitResult& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "dev") return s.dev;
  if (name == "test") return s.test;
  throw ContractError("unknown split '" + name + "'");
}

std::vector<std::vector<std::string>> sentences_of(const std::vector<corpus::Example>& examples) {
  std::vector<std::vector<std::string>> out;
  out.reserve(examples.size());
  for (const corpus::Example& e : examples) out.push_back(e.tokens);
  return out;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial text attack benchmark"};
  app.require_subcommand(1);

  // corpus build
  auto* corpus_cmd = app.add_subcommand("corpus", "Corpus preparation");
  corpus_cmd->require_subcommand(1);
  auto* build_cmd = corpus_cmd->add_subcommand("build", "Binarize, tokenize, filter and split reviews");
  std::string build_input, build_out, build_splits = "90,5,5", build_name = "dataset";
  std::optional<std::size_t> build_max_tokens;
  std::uint64_t build_seed = 0;
  build_cmd->add_option("--input", build_input, "JSON-lines reviews")->required();
  build_cmd->add_option("--max-tokens", build_max_tokens, "Drop examples longer than this");
  build_cmd->add_option("--splits", build_splits, "train,dev,test proportions");
  build_cmd->add_option("--seed", build_seed);
  build_cmd->add_option("--name", build_name);
  build_cmd->add_option("--out", build_out, "Output directory")->required();

  // embed inspect
  auto* embed_cmd = app.add_subcommand("embed", "Embedding tables");
  embed_cmd->require_subcommand(1);
  auto* inspect_cmd = embed_cmd->add_subcommand("inspect", "Nearest neighbours of a word by cosine");
  std::string inspect_table, inspect_word;
  std::size_t inspect_k = 10;
  inspect_cmd->add_option("--table", inspect_table)->required();
  inspect_cmd->add_option("--word", inspect_word)->required();
  inspect_cmd->add_option("--k", inspect_k);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a classifier");
  std::string train_arch = "cnn", train_data, train_out, train_embeddings, train_widths;
  ClassifierConfig tc;
  train_cmd->add_option("--arch", train_arch, "cnn | bilstm | bilstm-attn");
  train_cmd->add_option("--data", train_data, "Directory with train/dev/test.jsonl")->required();
  train_cmd->add_option("--embeddings", train_embeddings, "Defaults to <data>/embeddings.txt");
  train_cmd->add_option("--out", train_out, "Checkpoint path")->required();
  train_cmd->add_option("--hidden", tc.hidden_size);
  train_cmd->add_option("--layers", tc.num_layers);
  train_cmd->add_option("--filters", tc.filters_per_width);
  train_cmd->add_option("--widths", train_widths, "Comma-separated CNN filter widths");
  train_cmd->add_option("--attention", tc.attention_size);
  train_cmd->add_option("--dropout", tc.dropout_prob);
  train_cmd->add_option("--lr", tc.learning_rate);
  train_cmd->add_option("--batch", tc.batch_size);
  train_cmd->add_option("--epochs", tc.max_epochs);
  train_cmd->add_option("--patience", tc.early_stop_patience);
  train_cmd->add_option("--seed", tc.seed);

  // attack
  auto* attack_cmd = app.add_subcommand("attack", "Attack a split with one method");
  std::string attack_method, attack_ckpt, attack_data, attack_out, attack_embeddings, attack_counterfit,
      attack_pos, attack_flips = "1", attack_split = "test";
  attacks::AttackConfig ac;
  std::size_t attack_limit = 0;
  bool attack_serial = false;
  attack_cmd->add_option("--method", attack_method, "fgm | fgvm | deepfool | tyc | hotflip | textfooler")->required();
  attack_cmd->add_option("--ckpt", attack_ckpt)->required();
  attack_cmd->add_option("--data", attack_data)->required();
  attack_cmd->add_option("--out", attack_out, "JSON-lines results")->required();
  attack_cmd->add_option("--embeddings", attack_embeddings);
  attack_cmd->add_option("--epsilon", ac.epsilon);
  attack_cmd->add_option("--steps", ac.n_steps);
  attack_cmd->add_option("--max-flips", attack_flips, "n or p%");
  attack_cmd->add_option("--beam", ac.beam_width);
  attack_cmd->add_option("--candidates", ac.candidate_k);
  attack_cmd->add_option("--min-word-cosine", ac.min_word_cosine);
  attack_cmd->add_option("--min-sentence-sim", ac.min_sentence_sim);
  attack_cmd->add_option("--counterfit", attack_counterfit, "Synonym table for textfooler");
  attack_cmd->add_option("--pos-lexicon", attack_pos);
  attack_cmd->add_option("--split", attack_split);
  attack_cmd->add_option("--limit", attack_limit, "Attack only the first n examples");
  attack_cmd->add_option("--seed", ac.seed);
  attack_cmd->add_flag("--serial", attack_serial, "Single-threaded");

  // metrics score
  auto* metrics_cmd = app.add_subcommand("metrics", "Attack quality metrics");
  metrics_cmd->require_subcommand(1);
  auto* score_cmd = metrics_cmd->add_subcommand("score", "Score attack results");
  std::string score_results, score_ckpt, score_lm, score_out, score_embeddings;
  score_cmd->add_option("--results", score_results)->required();
  score_cmd->add_option("--ckpt", score_ckpt)->required();
  score_cmd->add_option("--lm", score_lm, "JSON-lines examples to train the language model on")->required();
  score_cmd->add_option("--embeddings", score_embeddings);
  score_cmd->add_option("--out", score_out)->required();

  // bench run
  auto* bench_cmd = app.add_subcommand("bench", "Benchmark suite");
  bench_cmd->require_subcommand(1);
  auto* run_cmd = bench_cmd->add_subcommand("run", "Run a manifest");
  std::string run_manifest, run_out;
  run_cmd->add_option("--manifest", run_manifest)->required();
  run_cmd->add_option("--out", run_out)->required();

  // humaneval
  auto* he_cmd = app.add_subcommand("humaneval", "Human evaluation");
  he_cmd->require_subcommand(1);
  auto* sample_cmd = he_cmd->add_subcommand("sample", "Sample annotation items");
  std::vector<std::string> sample_cells;
  std::string sample_baseline, sample_gold, sample_out;
  humaneval::SamplingOptions so;
  sample_cmd->add_option("--cell", sample_cells, "method:threshold=results.jsonl")->required();
  sample_cmd->add_option("--baseline", sample_baseline, "JSON-lines examples for unperturbed items");
  sample_cmd->add_option("--gold", sample_gold, "JSON object of control gold answers by item id");
  sample_cmd->add_option("--per-direction", so.per_direction);
  sample_cmd->add_option("--control-fraction", so.control_fraction);
  sample_cmd->add_option("--n-baseline", so.n_baseline);
  sample_cmd->add_option("--seed", so.seed);
  sample_cmd->add_option("--out", sample_out)->required();
  auto* serve_cmd = he_cmd->add_subcommand("serve", "Run the annotation service");
  std::string serve_items, serve_config;
  std::optional<std::uint16_t> serve_port;
  serve_cmd->add_option("--items", serve_items)->required();
  serve_cmd->add_option("--config", serve_config);
  serve_cmd->add_option("--port", serve_port);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic polarity dataset");
  synthetic::SyntheticSpec ss;
  std::string synth_out;
  synth_cmd->add_option("--out", synth_out)->required();
  synth_cmd->add_option("--examples", ss.n_examples);
  synth_cmd->add_option("--dim", ss.dimension);
  synth_cmd->add_option("--seed", ss.seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (build_cmd->parsed()) {
      corpus::DatasetSpec spec;
      spec.name = build_name;
      spec.max_tokens = build_max_tokens;
      spec.split_fractions = corpus::parse_split_fractions(build_splits);
      spec.seed = build_seed;
      const corpus::BuildSummary s = corpus::build(build_input, spec, build_out);
      std::printf("read %zu, neutral %zu, empty %zu, too long %zu -> train %zu dev %zu test %zu\n", s.read,
                  s.discarded_neutral, s.discarded_empty, s.discarded_long, s.sizes[0], s.sizes[1], s.sizes[2]);
    } else if (inspect_cmd->parsed()) {
      const EmbeddingTable table = EmbeddingTable::load(inspect_table);
      for (const Neighbor& n : table.top_k_neighbors(inspect_word, inspect_k, -1.0)) {
        std::printf("%-24s %.4f\n", n.word.c_str(), n.cosine);
      }
    } else if (train_cmd->parsed()) {
      tc.architecture = parse_architecture(train_arch);
      if (!train_widths.empty()) {
        tc.filter_widths.clear();
        std::stringstream in(train_widths);
        std::string part;
        while (std::getline(in, part, ',')) tc.filter_widths.push_back(std::stoul(part));
      }
      const fs::path table_path = train_embeddings.empty() ? fs::path(train_data) / "embeddings.txt"
                                                           : fs::path(train_embeddings);
      const auto table = load_table(table_path);
      const corpus::SplitResult splits = corpus::load_splits(train_data);
      TrainingOptions options;
      options.on_epoch = [](std::size_t epoch, double acc) {
        std::printf("epoch %zu dev %.2f%%\n", epoch, 100.0 * acc);
        std::fflush(stdout);
      };
      const Classifier model = train(Classifier(tc, table), splits.train, splits.dev, options);
      save_checkpoint(model, train_out, fs::absolute(table_path).string());
      std::printf("test %.2f%%\n", 100.0 * accuracy(model, splits.test));
    } else if (attack_cmd->parsed()) {
      const attacks::Method method = attacks::parse_method(attack_method);
      ac.max_flips = attacks::FlipBudget::parse(attack_flips);
      ac.validate();
      const auto table = load_table(table_for(attack_ckpt, attack_embeddings));
      const Classifier model = load_checkpoint(attack_ckpt, table);
      std::vector<corpus::Example> examples = select_split(corpus::load_splits(attack_data), attack_split);
      if (attack_limit > 0 && attack_limit < examples.size()) examples.resize(attack_limit);
      std::unique_ptr<EmbeddingTable> counterfit;
      PosTagger tagger;
      const MeanEmbeddingEncoder encoder(table);
      if (method == attacks::Method::kTextFooler) {
        if (attack_counterfit.empty()) throw ContractError("textfooler needs --counterfit");
        counterfit = std::make_unique<EmbeddingTable>(EmbeddingTable::load(attack_counterfit));
        if (!attack_pos.empty()) tagger = PosTagger::load(attack_pos);
      }
      const attacks::TextFoolerResources resources{counterfit.get(), &encoder, &tagger};
      const auto results = attacks::run_all(method, model, examples, ac, resources, attack_serial);
      attacks::write_results(attack_out, results);
      std::size_t successes = 0;
      for (const auto& r : results) successes += r.success;
      std::printf("%zu examples, %zu successful\n", results.size(), successes);
    } else if (score_cmd->parsed()) {
      const auto table = load_table(table_for(score_ckpt, score_embeddings));
      (void)load_checkpoint(score_ckpt, table);
      const auto results = attacks::read_results(score_results);
      const KneserNeyLm lm = KneserNeyLm::train(sentences_of(corpus::read_examples(score_lm)));
      const MeanEmbeddingEncoder encoder(table);
      const metrics::MetricsReport report = metrics::aggregate(results, encoder, lm);
      write_json(score_out, metrics::to_json(report));
      std::printf("acc %s bleu %s sem %s acpt %s\n", metrics::format_cell(report.acc).c_str(),
                  metrics::format_cell(report.bleu).c_str(), metrics::format_cell(report.sem).c_str(),
                  metrics::format_cell(report.acpt).c_str());
    } else if (run_cmd->parsed()) {
      const harness::SuiteOutput out = harness::run_suite(run_manifest, run_out);
      std::cout << harness::render_csv(out.rows);
    } else if (sample_cmd->parsed()) {
      std::vector<humaneval::SampleCell> cells;
      for (const std::string& spec : sample_cells) {
        const auto colon = spec.find(':');
        const auto eq = spec.find('=');
        if (colon == std::string::npos || eq == std::string::npos || eq < colon) {
          throw ContractError("--cell expects method:threshold=path, got '" + spec + "'");
        }
        cells.push_back({spec.substr(0, colon), spec.substr(colon + 1, eq - colon - 1),
                         attacks::read_results(spec.substr(eq + 1))});
      }
      std::vector<corpus::Example> baseline;
      if (!sample_baseline.empty()) baseline = corpus::read_examples(sample_baseline);
      else so.n_baseline = 0;
      std::map<std::string, humaneval::Answers> gold;
      if (!sample_gold.empty()) {
        std::ifstream in(sample_gold);
        if (!in) throw FormatError("cannot open " + sample_gold);
        for (const auto& [id, a] : json::parse(in).items()) gold.emplace(id, humaneval::answers_from_json(a));
      }
      const auto items = humaneval::sample_items(cells, baseline, so, gold);
      humaneval::write_items(sample_out, items);
      std::size_t controls = 0, missing = 0;
      for (const auto& item : items) {
        controls += item.is_control;
        missing += item.is_control && !item.gold_answers;
      }
      std::printf("%zu items, %zu controls, %zu controls without gold answers\n", items.size(), controls, missing);
    } else if (serve_cmd->parsed()) {
      humaneval::ServiceConfig config =
          humaneval::load_config(serve_config.empty() ? std::nullopt : std::optional<fs::path>(serve_config));
      if (serve_port) config.port = *serve_port;
      humaneval::Service service(humaneval::read_items(serve_items), config, config.data_dir / "events.jsonl");
      std::printf("listening on %s:%u\n", config.host.c_str(), static_cast<unsigned>(config.port));
      std::fflush(stdout);
      humaneval::serve(service);
    } else if (synth_cmd->parsed()) {
      synthetic::write(synthetic::generate(ss), synth_out);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
