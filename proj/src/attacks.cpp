#include "advtext/attacks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>

#include "advtext/errors.hpp"

namespace advtext::attacks {

using nlohmann::json;

namespace {

constexpr double kDegenerateNorm = 1e-12;

struct Flip {
  std::size_t position = 0;
  std::string word;
};

struct SearchState {
  std::vector<std::string> tokens;
  std::vector<std::uint8_t> flipped;
  Prediction prediction;
  double loss = 0.0;
};

double nll(const Prediction& p, Label label) {
  return -std::log(std::max(p.probability(label), 1e-300));
}

// Ranked flips for one state, at most `limit` of them.
using Expand = std::function<std::vector<Flip>(const SearchState&, std::size_t limit, std::size_t& queries)>;

// Greedy (beam 1) or beam search over single-word flips. Stops as soon as
// any evaluated sequence changes the prediction.
SearchState flip_search(const ScoreModel& model, SearchState start, Label gold, std::size_t budget,
                        std::size_t beam_width, const Expand& expand, std::size_t& queries) {
  const Label before = start.prediction.label;
  std::vector<SearchState> beam{std::move(start)};
  for (std::size_t step = 0; step < budget; ++step) {
    std::vector<SearchState> children;
    for (const SearchState& state : beam) {
      for (Flip& flip : expand(state, beam_width, queries)) {
        SearchState child = state;
        child.tokens[flip.position] = std::move(flip.word);
        child.flipped[flip.position] = 1;
        child.prediction = model.predict(child.tokens);
        ++queries;
        child.loss = nll(child.prediction, gold);
        if (child.prediction.label != before) return child;
        children.push_back(std::move(child));
      }
    }
    if (children.empty()) break;
    std::stable_sort(children.begin(), children.end(),
                     [](const SearchState& a, const SearchState& b) { return a.loss > b.loss; });
    if (children.size() > beam_width) children.resize(beam_width);
    beam = std::move(children);
  }
  return beam.front();
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

// Common prologue: predicts the original and fills the bookkeeping fields.
// Returns false when the example is misclassified and must pass through.
bool begin(const ScoreModel& model, const corpus::Example& example, Method method, AttackResult& r,
           Prediction* initial = nullptr) {
  if (example.tokens.empty()) throw ContractError("attack on empty example '" + example.id + "'");
  r.id = example.id;
  r.method = method;
  r.original = example.tokens;
  r.adversarial = example.tokens;
  r.original_label = example.label;
  const Prediction p = model.predict(example.tokens);
  r.queries = 1;
  r.label_before = p.label;
  r.label_after = p.label;
  if (initial != nullptr) *initial = p;
  if (p.label != example.label) {
    r.status = "misclassified";
    return false;
  }
  r.attacked = true;
  r.status = "ok";
  return true;
}

void finish(const ScoreModel& model, AttackResult& r, bool evaluate) {
  if (evaluate) {
    r.label_after = model.predict(r.adversarial).label;
    ++r.queries;
  }
  r.flips = hamming(r.original, r.adversarial);
  r.success = r.label_after != r.label_before;
}

std::vector<std::string> reconstruct(const EmbeddingTable& table, const Tensor& perturbed) {
  std::vector<std::string> words;
  words.reserve(perturbed.rows());
  for (std::size_t i = 0; i < perturbed.rows(); ++i) words.push_back(table.nearest_word(perturbed.row(i)));
  return words;
}

AttackResult gradient_attack(const GradientModel& model, const corpus::Example& example, const AttackConfig& config,
                             bool use_sign) {
  config.validate();
  const Stopwatch clock;
  AttackResult r;
  if (begin(model, example, use_sign ? Method::kFgm : Method::kFgvm, r)) {
    const Tensor rows = model.embeddings().embed(example.tokens);
    std::size_t steps = 0;
    const Tensor perturbed = gradient_perturb(model, rows, example.label, config, use_sign, &r.queries, &steps);
    if (steps == 0) {
      r.status = "zero-gradient";
    } else {
      r.adversarial = reconstruct(model.embeddings(), perturbed);
    }
    finish(model, r, steps != 0);
  }
  r.wall_time = clock.seconds();
  return r;
}

bool prediction_flipped(double margin, Label label) {
  // Ties resolve to Negative, matching make_prediction.
  return label == Label::kPositive ? margin <= 0.0 : margin < 0.0;
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::kFgm: return "fgm";
    case Method::kFgvm: return "fgvm";
    case Method::kDeepFool: return "deepfool";
    case Method::kTyc: return "tyc";
    case Method::kHotFlip: return "hotflip";
    case Method::kTextFooler: return "textfooler";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (Method m : kAllMethods) {
    if (to_string(m) == name) return m;
  }
  throw ContractError("unknown attack method '" + std::string(name) + "'");
}

bool is_white_box(Method m) { return m != Method::kTextFooler; }

FlipBudget FlipBudget::absolute(std::size_t n) {
  if (n < 1) throw ContractError("absolute flip budget must be at least 1");
  FlipBudget b;
  b.value_ = static_cast<double>(n);
  return b;
}

FlipBudget FlipBudget::fraction(double f) {
  if (!(f > 0.0 && f <= 1.0)) throw ContractError("fractional flip budget must be in (0, 1]");
  FlipBudget b;
  b.fraction_ = true;
  b.value_ = f;
  return b;
}

FlipBudget FlipBudget::parse(std::string_view text) {
  if (text.empty()) throw ContractError("empty flip budget");
  const std::string s(text);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ContractError("invalid flip budget '" + s + "'");
  }
  if (used + 1 == s.size() && s.back() == '%') return fraction(v / 100.0);
  if (used != s.size()) throw ContractError("invalid flip budget '" + s + "'");
  if (s.find('.') != std::string::npos) return fraction(v);
  if (v < 1.0) throw ContractError("absolute flip budget must be at least 1");
  return absolute(static_cast<std::size_t>(v));
}

std::size_t FlipBudget::resolve(std::size_t length) const {
  if (!fraction_) return std::min(static_cast<std::size_t>(value_), length);
  const auto n = static_cast<std::size_t>(std::ceil(value_ * static_cast<double>(length) - 1e-9));
  return std::clamp<std::size_t>(n, 1, std::max<std::size_t>(length, 1));
}

std::string FlipBudget::to_string() const {
  if (!fraction_) return std::to_string(static_cast<std::size_t>(value_));
  const double pct = value_ * 100.0;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g%%", pct);
  return buf;
}

void AttackConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ContractError("epsilon must be positive");
  if (n_steps < 1) throw ContractError("n_steps must be at least 1");
  if (beam_width < 1) throw ContractError("beam_width must be at least 1");
  if (candidate_k < 1) throw ContractError("candidate_k must be at least 1");
}

std::size_t hamming(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.size() != b.size()) throw ContractError("hamming distance of sequences with different lengths");
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += a[i] != b[i];
  return n;
}

Tensor gradient_perturb(const GradientModel& model, const Tensor& rows, Label label, const AttackConfig& config,
                        bool use_sign, std::size_t* queries, std::size_t* steps_taken) {
  Tensor e = rows;
  std::size_t steps = 0;
  for (; steps < config.n_steps; ++steps) {
    const ValueGradient vg = model.loss_gradient(e, label);
    if (queries != nullptr) ++*queries;
    const Tensor& g = vg.gradient;
    if (use_sign) {
      bool any = false;
      for (std::size_t k = 0; k < e.size(); ++k) {
        if (g[k] > 0.0) {
          e[k] += config.epsilon;
          any = true;
        } else if (g[k] < 0.0) {
          e[k] -= config.epsilon;
          any = true;
        }
      }
      if (!any) break;
    } else {
      const double norm = g.l2_norm();
      if (norm == 0.0) break;
      for (std::size_t k = 0; k < e.size(); ++k) e[k] += config.epsilon * g[k] / norm;
    }
  }
  if (steps_taken != nullptr) *steps_taken = steps;
  return e;
}

DeepFoolTrace deepfool_perturb(const GradientModel& model, const Tensor& rows, Label label,
                               const AttackConfig& config, std::size_t* queries) {
  DeepFoolTrace trace;
  Tensor total = Tensor::zeros_like(rows);
  const double scale = 1.0 + config.epsilon;
  auto point = [&] {
    Tensor x = rows;
    for (std::size_t k = 0; k < x.size(); ++k) x[k] += scale * total[k];
    return x;
  };
  for (std::size_t it = 0; it < config.n_steps; ++it) {
    const ValueGradient mg = model.margin_gradient(point(), label);
    if (queries != nullptr) ++*queries;
    if (prediction_flipped(mg.value, label)) break;
    const double norm = mg.gradient.l2_norm();
    if (norm < kDegenerateNorm) {
      trace.degenerate = it == 0;
      break;
    }
    const double step = -mg.value / (norm * norm);
    for (std::size_t k = 0; k < total.size(); ++k) total[k] += step * mg.gradient[k];
    ++trace.iterations;
  }
  trace.perturbed = point();
  return trace;
}

Tensor hotflip_scores(const EmbeddingTable& table, const Tensor& rows, const Tensor& gradient,
                      kernels::Backend backend) {
  if (gradient.shape() != rows.shape()) {
    throw DimensionError("gradient " + shape_string(gradient.shape()) + " vs rows " + shape_string(rows.shape()));
  }
  const std::size_t len = rows.rows(), d = rows.cols(), v = table.size();
  Tensor scores({len, v});
  kernels::gemm_nt(backend, {gradient.data(), len, d}, table.view(), scores.data());
  for (std::size_t i = 0; i < len; ++i) {
    double current = 0.0;
    for (std::size_t k = 0; k < d; ++k) current += rows.at(i, k) * gradient.at(i, k);
    for (double& s : scores.row(i)) s -= current;
  }
  return scores;
}

std::vector<FlipChoice> hotflip_top(const Tensor& scores, std::span<const std::string> tokens,
                                    const EmbeddingTable& table, std::span<const std::uint8_t> frozen,
                                    std::size_t k) {
  std::vector<FlipChoice> all;
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    if (!frozen.empty() && frozen[i] != 0) continue;
    const std::optional<std::size_t> current = table.index_of(tokens[i]);
    for (std::size_t w = 0; w < scores.cols(); ++w) {
      if (current && *current == w) continue;
      all.push_back({i, w, scores.at(i, w)});
    }
  }
  const std::size_t keep = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(),
                    [](const FlipChoice& a, const FlipChoice& b) {
                      if (a.score != b.score) return a.score > b.score;
                      if (a.position != b.position) return a.position < b.position;
                      return a.word < b.word;
                    });
  all.resize(keep);
  return all;
}

std::optional<FlipChoice> hotflip_best(const Tensor& scores, std::span<const std::string> tokens,
                                       const EmbeddingTable& table, std::span<const std::uint8_t> frozen) {
  std::optional<FlipChoice> best;
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    if (!frozen.empty() && frozen[i] != 0) continue;
    const std::optional<std::size_t> current = table.index_of(tokens[i]);
    for (std::size_t w = 0; w < scores.cols(); ++w) {
      if (current && *current == w) continue;
      if (!best || scores.at(i, w) > best->score) best = FlipChoice{i, w, scores.at(i, w)};
    }
  }
  return best;
}

std::vector<double> tyc_vulnerability(const Tensor& gradient) {
  std::vector<double> v(gradient.rows());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double s = 0.0;
    for (double g : gradient.row(i)) s += g * g;
    v[i] = std::sqrt(s);
  }
  return v;
}

std::vector<std::string> delete_token(std::span<const std::string> tokens, std::size_t i) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    if (k != i) out.push_back(tokens[k]);
  }
  if (out.empty()) out.emplace_back("<unk>");
  return out;
}

AttackResult fgm(const GradientModel& model, const corpus::Example& example, const AttackConfig& config) {
  return gradient_attack(model, example, config, true);
}

AttackResult fgvm(const GradientModel& model, const corpus::Example& example, const AttackConfig& config) {
  return gradient_attack(model, example, config, false);
}

AttackResult deepfool(const GradientModel& model, const corpus::Example& example, const AttackConfig& config) {
  config.validate();
  const Stopwatch clock;
  AttackResult r;
  if (begin(model, example, Method::kDeepFool, r)) {
    const Tensor rows = model.embeddings().embed(example.tokens);
    const DeepFoolTrace trace = deepfool_perturb(model, rows, example.label, config, &r.queries);
    if (trace.degenerate) {
      r.status = "degenerate-gradient";
    } else {
      r.adversarial = reconstruct(model.embeddings(), trace.perturbed);
    }
    finish(model, r, !trace.degenerate);
  }
  r.wall_time = clock.seconds();
  return r;
}

AttackResult tyc(const GradientModel& model, const corpus::Example& example, const AttackConfig& config) {
  config.validate();
  const Stopwatch clock;
  AttackResult r;
  Prediction initial;
  if (begin(model, example, Method::kTyc, r, &initial)) {
    const EmbeddingTable& table = model.embeddings();
    const Expand expand = [&](const SearchState& state, std::size_t limit, std::size_t& queries) {
      const Tensor rows = table.embed(state.tokens);
      const ValueGradient vg = model.loss_gradient(rows, example.label);
      ++queries;
      const Tensor perturbed = gradient_perturb(model, rows, example.label, config, true, &queries);
      const std::vector<double> vulnerability = tyc_vulnerability(vg.gradient);
      std::vector<std::size_t> order(rows.rows());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return vulnerability[a] > vulnerability[b]; });
      std::vector<Flip> flips;
      for (std::size_t i : order) {
        if (flips.size() == limit) break;
        if (state.flipped[i] != 0) continue;
        const std::string& candidate = table.nearest_word(perturbed.row(i));
        if (candidate != state.tokens[i]) flips.push_back({i, candidate});
      }
      return flips;
    };
    SearchState start{example.tokens, std::vector<std::uint8_t>(example.tokens.size(), 0), initial, 0.0};
    start.loss = nll(start.prediction, example.label);
    const SearchState end = flip_search(model, std::move(start), example.label,
                                        config.max_flips.resolve(example.tokens.size()), config.beam_width,
                                        expand, r.queries);
    r.adversarial = end.tokens;
    r.label_after = end.prediction.label;
    if (r.adversarial == r.original) r.status = "no-candidates";
    finish(model, r, false);
  }
  r.wall_time = clock.seconds();
  return r;
}

AttackResult hotflip(const GradientModel& model, const corpus::Example& example, const AttackConfig& config) {
  config.validate();
  const Stopwatch clock;
  AttackResult r;
  Prediction initial;
  if (begin(model, example, Method::kHotFlip, r, &initial)) {
    const EmbeddingTable& table = model.embeddings();
    const Expand expand = [&](const SearchState& state, std::size_t limit, std::size_t& queries) {
      const Tensor rows = table.embed(state.tokens);
      const ValueGradient vg = model.loss_gradient(rows, example.label);
      ++queries;
      const Tensor scores = hotflip_scores(table, rows, vg.gradient);
      std::vector<Flip> flips;
      if (limit == 1) {
        if (const auto best = hotflip_best(scores, state.tokens, table, state.flipped)) {
          flips.push_back({best->position, table.word(best->word)});
        }
      } else {
        for (const FlipChoice& c : hotflip_top(scores, state.tokens, table, state.flipped, limit)) {
          flips.push_back({c.position, table.word(c.word)});
        }
      }
      return flips;
    };
    SearchState start{example.tokens, std::vector<std::uint8_t>(example.tokens.size(), 0), initial, 0.0};
    start.loss = nll(start.prediction, example.label);
    const SearchState end = flip_search(model, std::move(start), example.label,
                                        config.max_flips.resolve(example.tokens.size()), config.beam_width,
                                        expand, r.queries);
    r.adversarial = end.tokens;
    r.label_after = end.prediction.label;
    if (r.adversarial == r.original) r.status = "no-candidates";
    finish(model, r, false);
  }
  r.wall_time = clock.seconds();
  return r;
}

AttackResult textfooler(const ScoreModel& model, const corpus::Example& example, const AttackConfig& config,
                        const TextFoolerResources& resources) {
  config.validate();
  if (resources.counterfit == nullptr || resources.encoder == nullptr || resources.tagger == nullptr) {
    throw ContractError("textfooler needs a counter-fitted table, a sentence encoder and a POS tagger");
  }
  const Stopwatch clock;
  AttackResult r;
  Prediction initial;
  if (!begin(model, example, Method::kTextFooler, r, &initial)) {
    r.wall_time = clock.seconds();
    return r;
  }
  const Label gold = example.label;
  const std::vector<std::string>& original = example.tokens;
  const std::size_t len = original.size();
  const double base = initial.probability(gold);
  std::vector<double> importance(len);
  for (std::size_t i = 0; i < len; ++i) {
    importance[i] = base - model.predict(delete_token(original, i)).probability(gold);
    ++r.queries;
  }
  std::vector<std::size_t> order(len);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return importance[a] > importance[b]; });

  const std::vector<double> original_code = resources.encoder->encode(original);
  const std::size_t budget = config.max_flips.resolve(len);
  std::vector<std::string> current = original;
  double current_score = base;
  Label current_label = r.label_before;
  std::size_t replacements = 0;
  for (std::size_t i : order) {
    if (replacements == budget) break;
    if (!resources.counterfit->contains(original[i])) continue;
    const CoarseTag tag = resources.tagger->tag(original[i]);
    const std::vector<Neighbor> neighbors =
        resources.counterfit->top_k_neighbors(original[i], config.candidate_k, config.min_word_cosine);

    std::optional<std::string> best_flip;
    double best_flip_sim = -2.0;
    std::optional<std::string> best_drop;
    double best_drop_score = current_score;
    std::vector<std::string> trial = current;
    for (const Neighbor& n : neighbors) {
      if (n.word == original[i] || resources.tagger->tag(n.word) != tag) continue;
      trial[i] = n.word;
      const double sim = cosine_or_zero(resources.encoder->encode(trial), original_code);
      if (sim < config.min_sentence_sim) continue;
      const Prediction p = model.predict(trial);
      ++r.queries;
      if (p.label != r.label_before) {
        if (sim > best_flip_sim) {
          best_flip = n.word;
          best_flip_sim = sim;
        }
      } else if (p.probability(gold) < best_drop_score) {
        best_drop = n.word;
        best_drop_score = p.probability(gold);
      }
    }
    if (best_flip) {
      current[i] = *best_flip;
      current_label = other(r.label_before);
      break;
    }
    if (best_drop) {
      current[i] = *best_drop;
      current_score = best_drop_score;
      ++replacements;
    }
  }
  r.adversarial = std::move(current);
  r.label_after = current_label;
  if (r.adversarial == r.original) r.status = "no-candidates";
  finish(model, r, false);
  r.wall_time = clock.seconds();
  return r;
}

AttackResult run_attack(Method method, const GradientModel& model, const corpus::Example& example,
                        const AttackConfig& config, const TextFoolerResources& resources) {
  switch (method) {
    case Method::kFgm: return fgm(model, example, config);
    case Method::kFgvm: return fgvm(model, example, config);
    case Method::kDeepFool: return deepfool(model, example, config);
    case Method::kTyc: return tyc(model, example, config);
    case Method::kHotFlip: return hotflip(model, example, config);
    case Method::kTextFooler: return textfooler(static_cast<const ScoreModel&>(model), example, config, resources);
  }
  throw ContractError("unknown attack method");
}

std::vector<AttackResult> run_all(Method method, const GradientModel& model,
                                  std::span<const corpus::Example> examples, const AttackConfig& config,
                                  const TextFoolerResources& resources, bool serial) {
  std::vector<AttackResult> out(examples.size());
  const auto n = static_cast<std::ptrdiff_t>(examples.size());
  if (serial) {
    for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = run_attack(method, model, examples[i], config, resources);
    return out;
  }
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = run_attack(method, model, examples[i], config, resources);
    } catch (...) {
#pragma omp critical(advtext_attack_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

json to_json(const AttackResult& r) {
  return json{{"id", r.id},
              {"method", to_string(r.method)},
              {"original", r.original},
              {"adversarial", r.adversarial},
              {"original_label", to_string(r.original_label)},
              {"label_before", to_string(r.label_before)},
              {"label_after", to_string(r.label_after)},
              {"attacked", r.attacked},
              {"success", r.success},
              {"flips", r.flips},
              {"queries", r.queries},
              {"wall_time", r.wall_time},
              {"status", r.status}};
}

AttackResult result_from_json(const json& j) {
  try {
    AttackResult r;
    r.id = j.at("id").get<std::string>();
    r.method = parse_method(j.at("method").get<std::string>());
    r.original = j.at("original").get<std::vector<std::string>>();
    r.adversarial = j.at("adversarial").get<std::vector<std::string>>();
    r.original_label = parse_label(j.at("original_label").get<std::string>());
    r.label_before = parse_label(j.at("label_before").get<std::string>());
    r.label_after = parse_label(j.at("label_after").get<std::string>());
    r.attacked = j.at("attacked").get<bool>();
    r.success = j.at("success").get<bool>();
    r.flips = j.at("flips").get<std::size_t>();
    r.queries = j.at("queries").get<std::size_t>();
    r.wall_time = j.at("wall_time").get<double>();
    r.status = j.value("status", std::string("ok"));
    if (r.original.size() != r.adversarial.size()) throw FormatError("original and adversarial lengths differ");
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed attack result: ") + e.what());
  }
}

void write_results(const std::filesystem::path& path, std::span<const AttackResult> results) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  for (const AttackResult& r : results) out << to_json(r).dump() << '\n';
}

std::vector<AttackResult> read_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<AttackResult> results;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      results.push_back(result_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return results;
}

}  // namespace advtext::attacks
