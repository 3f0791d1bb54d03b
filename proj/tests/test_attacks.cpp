#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "advtext/attacks.hpp"
#include "advtext/errors.hpp"
#include "advtext/text_models.hpp"
#include "support.hpp"

using namespace advtext;
using namespace advtext::attacks;

namespace {

corpus::Example example(std::vector<std::string> tokens, Label label, std::string id = "x") {
  return {std::move(id), std::move(tokens), label, corpus::Split::kTest};
}

// Labelled with the model's own prediction so the attack does not skip it.
corpus::Example predicted(const ScoreModel& model, std::vector<std::string> tokens) {
  const Label l = model.predict(tokens).label;
  return example(std::move(tokens), l);
}

std::vector<std::string> random_tokens(const EmbeddingTable& t, std::size_t len, std::mt19937_64& rng) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < len; ++i) out.push_back(t.word(rng() % t.size()));
  return out;
}

std::size_t brute_nearest(const EmbeddingTable& t, std::span<const double> q) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < t.size(); ++r) {
    double d = 0;
    for (std::size_t c = 0; c < t.dimension(); ++c) d += (t.row(r)[c] - q[c]) * (t.row(r)[c] - q[c]);
    if (d < best_d) {
      best_d = d;
      best = r;
    }
  }
  return best;
}

const Architecture kAllArchitectures[] = {Architecture::kCnn, Architecture::kBiLstm, Architecture::kBiLstmAttention};

ClassifierConfig toy_config(Architecture arch, std::uint64_t seed) {
  ClassifierConfig c;
  c.architecture = arch;
  c.hidden_size = 4;
  c.filter_widths = {2, 3};
  c.filters_per_width = 4;
  c.attention_size = 3;
  c.seed = seed;
  return c;
}

nlohmann::json without_time(const AttackResult& r) {
  nlohmann::json j = to_json(r);
  j.erase("wall_time");
  return j;
}

// Score depends only on how many times "good" occurs.
class GoodModel final : public ScoreModel {
 public:
  Prediction predict(std::span<const std::string> tokens) const override {
    if (tokens.empty()) throw ContractError("empty");
    ++calls;
    const auto n = std::count(tokens.begin(), tokens.end(), "good");
    return make_prediction(0.0, 3.0 * static_cast<double>(n) - 1.0);
  }
  mutable std::size_t calls = 0;
};

struct GoodWorld {
  std::shared_ptr<const EmbeddingTable> counterfit;
  PosTagger tagger;
  std::unique_ptr<MeanEmbeddingEncoder> encoder;
};

GoodWorld good_world() {
  GoodWorld w;
  // clusters along the axes; "today" sits apart from all of them
  w.counterfit = std::make_shared<const EmbeddingTable>(EmbeddingTable::from_rows(
      {"good", "fine", "nice", "the", "a", "food", "meal", "was", "is", "today"},
      Tensor::matrix(10, 4, {1.0, 0.0, 0.0, 0.0, 0.9, 0.2, 0.0, 0.0, 0.9, 0.0, 0.2, 0.0,
                             0.0, 1.0, 0.0, 0.0, 0.1, 0.9, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0,
                             0.0, 0.1, 0.9, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.1, 0.9,
                             0.5, 0.5, 0.5, 0.5})));
  for (const char* adj : {"good", "fine", "nice"}) w.tagger.add(adj, CoarseTag::kAdj);
  for (const char* det : {"the", "a"}) w.tagger.add(det, CoarseTag::kDet);
  for (const char* noun : {"food", "meal"}) w.tagger.add(noun, CoarseTag::kNoun);
  for (const char* verb : {"was", "is"}) w.tagger.add(verb, CoarseTag::kVerb);
  w.tagger.add("today", CoarseTag::kAdv);
  w.encoder = std::make_unique<MeanEmbeddingEncoder>(w.counterfit);
  return w;
}

TextFoolerResources resources_of(const GoodWorld& w) { return {w.counterfit.get(), w.encoder.get(), &w.tagger}; }

}  // namespace

TEST_CASE("fgm with a vanishing step reconstructs the original") {
  const auto table = test::random_table(40, 6, 1);
  const test::LinearModel model(table, {0.3, -0.2, 0.5, 0.1, -0.4, 0.2}, 0.1);
  std::mt19937_64 rng(3);
  AttackConfig config;
  config.epsilon = 1e-9;
  for (int trial = 0; trial < 20; ++trial) {
    const auto ex = predicted(model, random_tokens(*table, 1 + rng() % 8, rng));
    for (const AttackResult& r : {fgm(model, ex, config), fgvm(model, ex, config)}) {
      CHECK(r.adversarial == r.original);
      CHECK_FALSE(r.success);
      CHECK(r.flips == 0);
      CHECK(r.attacked);
    }
  }
}

TEST_CASE("one gradient step lands on the brute-force nearest word") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const auto table = test::random_table(3, 2, 100 + trial);
    std::normal_distribution<double> normal;
    const test::LinearModel model(table, {normal(rng), normal(rng)}, normal(rng));
    const auto ex = predicted(model, {table->word(trial % 3)});
    AttackConfig config;
    config.n_steps = 1;
    config.epsilon = 0.2 + 0.1 * (trial % 15);
    const Tensor rows = table->embed(ex.tokens);
    const Tensor g = model.loss_gradient(rows, ex.label).gradient;
    const double norm = std::hypot(g[0], g[1]);
    std::vector<double> sign_step(2), value_step(2);
    for (std::size_t c = 0; c < 2; ++c) {
      sign_step[c] = rows[c] + config.epsilon * (g[c] > 0 ? 1.0 : g[c] < 0 ? -1.0 : 0.0);
      value_step[c] = rows[c] + config.epsilon * g[c] / norm;
    }
    CHECK(fgm(model, ex, config).adversarial[0] == table->word(brute_nearest(*table, sign_step)));
    CHECK(fgvm(model, ex, config).adversarial[0] == table->word(brute_nearest(*table, value_step)));
  }
}

TEST_CASE("fgm and fgvm step in different directions") {
  const auto table = test::random_table(10, 3, 2);
  const test::LinearModel model(table, {1.0, -0.25, 0.5}, 0.0);
  const Tensor rows = table->embed(std::vector<std::string>{"w1", "w2"});
  AttackConfig config;
  config.n_steps = 1;
  const Tensor s = gradient_perturb(model, rows, Label::kPositive, config, true, nullptr);
  const Tensor v = gradient_perturb(model, rows, Label::kPositive, config, false, nullptr);
  std::vector<double> ds(rows.size()), dv(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    ds[k] = s[k] - rows[k];
    dv[k] = v[k] - rows[k];
  }
  CHECK(cosine_or_zero(ds, dv) < 1.0 - 1e-6);
  double vn = 0;
  for (double x : dv) vn += x * x;
  CHECK(std::sqrt(vn) == doctest::Approx(config.epsilon).epsilon(1e-12));
  for (double x : ds) CHECK(std::abs(x) == doctest::Approx(config.epsilon).epsilon(1e-12));
}

TEST_CASE("zero gradient leaves the input alone") {
  const auto table = test::random_table(10, 3, 4);
  const test::LinearModel flat(table, {0.0, 0.0, 0.0}, 1.0);
  const auto ex = example({"w1", "w2", "w3"}, Label::kPositive);
  for (const AttackResult& r : {fgm(flat, ex, {}), fgvm(flat, ex, {})}) {
    CHECK(r.adversarial == ex.tokens);
    CHECK_FALSE(r.success);
    CHECK(r.status == "zero-gradient");
  }
  const AttackResult d = deepfool(flat, ex, {});
  CHECK(d.status == "degenerate-gradient");
  CHECK(d.adversarial == ex.tokens);
  CHECK_FALSE(d.success);
}

TEST_CASE("deepfool on a linear model") {
  const auto table = test::random_table(30, 4, 5);
  const test::LinearModel model(table, {0.7, -0.3, 0.2, 0.9}, -0.2);
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto ex = predicted(model, random_tokens(*table, 2 + rng() % 5, rng));
    const Tensor rows = table->embed(ex.tokens);
    const double sign = ex.label == Label::kPositive ? 1.0 : -1.0;
    const double margin = sign * model.score(rows);
    REQUIRE(margin >= 0.0);

    AttackConfig config;
    config.epsilon = 0.05;
    const DeepFoolTrace crossed = deepfool_perturb(model, rows, ex.label, config, nullptr);
    CHECK(crossed.iterations == 1);
    CHECK(sign * model.score(crossed.perturbed) == doctest::Approx(-config.epsilon * margin).epsilon(1e-9));
    CHECK(model.predict_embedded(crossed.perturbed).label != ex.label);

    config.epsilon = 0.0;
    config.n_steps = 1;
    const DeepFoolTrace boundary = deepfool_perturb(model, rows, ex.label, config, nullptr);
    CHECK(std::abs(model.score(boundary.perturbed)) < 1e-9);
  }

  const auto wrong = example({"w1", "w2"}, other(model.predict(std::vector<std::string>{"w1", "w2"}).label));
  const AttackResult r = deepfool(model, wrong, {});
  CHECK_FALSE(r.attacked);
  CHECK(r.status == "misclassified");
  CHECK(r.adversarial == r.original);
  CHECK_FALSE(r.success);
  CHECK(r.queries == 1);
}

TEST_CASE("tyc budget and vulnerability order") {
  CHECK(FlipBudget::fraction(0.1).resolve(10) == 1);
  const auto& world = test::tiny_world();
  const Classifier& model = *world.cnn;
  AttackConfig config;
  config.max_flips = FlipBudget::fraction(0.1);
  config.epsilon = 2.0;
  std::size_t seen = 0;
  for (const auto& ex : world.data.splits.test) {
    if (ex.tokens.size() != 10) continue;
    ++seen;
    CHECK(tyc(model, ex, config).flips <= 1);
  }
  CHECK(seen > 0);

  const auto table = test::random_table(25, 4, 7);
  std::mt19937_64 rng(8);
  std::size_t flipped = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const Classifier toy(toy_config(kAllArchitectures[trial % 3], 20 + trial), table);
    const auto ex = predicted(toy, random_tokens(*table, 3, rng));
    const Tensor rows = table->embed(ex.tokens);
    const Tensor numeric = test::numeric_gradient(
        [&](const Tensor& x) { return toy.loss_gradient(x, ex.label).value; }, rows);
    std::vector<double> norms(3);
    for (std::size_t i = 0; i < 3; ++i) {
      for (double g : numeric.row(i)) norms[i] += g * g;
    }
    std::vector<std::size_t> oracle_order{0, 1, 2};
    std::stable_sort(oracle_order.begin(), oracle_order.end(),
                     [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });
    const std::vector<double> vulnerability = tyc_vulnerability(toy.loss_gradient(rows, ex.label).gradient);
    std::vector<std::size_t> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return vulnerability[a] > vulnerability[b]; });
    CHECK(order == oracle_order);

    AttackConfig one;
    one.max_flips = FlipBudget::absolute(1);
    one.epsilon = 1.0;
    const Tensor perturbed = gradient_perturb(toy, rows, ex.label, one, true, nullptr);
    std::optional<std::size_t> expected;
    for (std::size_t i : oracle_order) {
      if (table->nearest_word(perturbed.row(i)) != ex.tokens[i]) {
        expected = i;
        break;
      }
    }
    const AttackResult r = tyc(toy, ex, one);
    if (!expected) {
      CHECK(r.flips == 0);
      continue;
    }
    REQUIRE(r.flips == 1);
    ++flipped;
    CHECK(r.adversarial[*expected] != ex.tokens[*expected]);
  }
  CHECK(flipped > 0);
}

TEST_CASE("tyc with no usable candidate does nothing") {
  const auto& world = test::tiny_world();
  AttackConfig config;
  config.epsilon = 1e-9;
  config.max_flips = FlipBudget::fraction(1.0);
  for (std::size_t i = 0; i < 10; ++i) {
    const AttackResult r = tyc(*world.cnn, world.data.splits.test[i], config);
    CHECK(r.flips == 0);
    CHECK_FALSE(r.success);
    if (r.attacked) CHECK(r.status == "no-candidates");
  }
}

TEST_CASE("hotflip picks the exhaustive argmax of the linearised score") {
  const auto table = test::random_table(20, 5, 9);
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const Classifier toy(toy_config(kAllArchitectures[trial % 3], trial), table);
    const auto ex = predicted(toy, random_tokens(*table, 4, rng));
    const Tensor rows = table->embed(ex.tokens);
    const Tensor g = toy.loss_gradient(rows, ex.label).gradient;

    double best = -std::numeric_limits<double>::infinity();
    std::size_t best_i = 0, best_w = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t w = 0; w < table->size(); ++w) {
        if (table->word(w) == ex.tokens[i]) continue;
        double s = 0;
        for (std::size_t k = 0; k < 5; ++k) s += (table->row(w)[k] - rows.at(i, k)) * g.at(i, k);
        if (s > best) {
          best = s;
          best_i = i;
          best_w = w;
        }
      }
    }
    const auto choice = hotflip_best(hotflip_scores(*table, rows, g), ex.tokens, *table, {});
    REQUIRE(choice.has_value());
    CHECK(choice->position == best_i);
    CHECK(choice->word == best_w);
    CHECK(choice->score == doctest::Approx(best).epsilon(1e-12));

    const AttackResult r = hotflip(toy, ex, {});
    CHECK(r.flips == 1);
    CHECK(r.adversarial[best_i] == table->word(best_w));
  }
}

TEST_CASE("hotflip top-k ordering and frozen positions") {
  const Tensor scores = Tensor::matrix(2, 3, {0.5, 2.0, 2.0, 9.0, 2.0, 0.0});
  const auto table = EmbeddingTable::from_rows({"a", "b", "c"}, Tensor::matrix(3, 1, {0.0, 1.0, 2.0}));
  const std::vector<std::string> tokens{"b", "a"};
  const auto top = hotflip_top(scores, tokens, table, {}, 3);
  REQUIRE(top.size() == 3);
  CHECK((top[0].position == 0 && top[0].word == 2));
  CHECK((top[1].position == 1 && top[1].word == 1));
  CHECK((top[2].position == 0 && top[2].word == 0));
  const auto best = hotflip_best(scores, tokens, table, {});
  CHECK((best->position == 0 && best->word == 2));
  const std::vector<std::uint8_t> frozen{1, 0};
  CHECK(hotflip_best(scores, tokens, table, frozen)->position == 1);
  CHECK_FALSE(hotflip_best(scores, tokens, table, std::vector<std::uint8_t>{1, 1}).has_value());
}

TEST_CASE("linearised score is exact for a linear loss") {
  const auto table = test::random_table(20, 5, 11);
  const test::LinearModel model(table, {0.4, -1.1, 0.3, 0.8, -0.2}, 0.3, true);
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto tokens = random_tokens(*table, 1 + rng() % 6, rng);
    const Label label = trial % 2 ? Label::kPositive : Label::kNegative;
    const Tensor rows = table->embed(tokens);
    const ValueGradient vg = model.loss_gradient(rows, label);
    const Tensor scores = hotflip_scores(*table, rows, vg.gradient);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      for (std::size_t w = 0; w < table->size(); ++w) {
        auto flipped = tokens;
        flipped[i] = table->word(w);
        const double actual = model.loss_gradient(table->embed(flipped), label).value - vg.value;
        CHECK(std::abs(scores.at(i, w) - actual) <= 1e-9);
      }
    }
  }
}

TEST_CASE("textfooler ranks the decisive token first and accounts queries") {
  const GoodWorld w = good_world();
  GoodModel model;
  AttackConfig config;
  config.min_sentence_sim = 0.0;
  config.max_flips = FlipBudget::absolute(3);
  const auto ex = example({"the", "food", "was", "good", "today"}, Label::kPositive);
  const AttackResult r = textfooler(model, ex, config, resources_of(w));
  // baseline, five deletions, then only the two neighbours of "good"
  CHECK(r.queries == 1 + 5 + 2);
  CHECK(r.queries == model.calls);
  CHECK(r.success);
  CHECK(r.flips == 1);
  CHECK(r.adversarial[3] != "good");
  CHECK(r.label_after == Label::kNegative);
}

TEST_CASE("textfooler picks the most similar label-flipping candidate") {
  const GoodWorld w = good_world();
  GoodModel model;
  AttackConfig config;
  config.min_sentence_sim = 0.0;
  const auto ex = example({"good", "food"}, Label::kPositive);
  const AttackResult r = textfooler(model, ex, config, resources_of(w));
  const auto sim = [&](const std::string& word) {
    return cosine_or_zero(w.encoder->encode(std::vector<std::string>{word, "food"}),
                          w.encoder->encode(ex.tokens));
  };
  const std::string expected = sim("fine") >= sim("nice") ? "fine" : "nice";
  CHECK(r.adversarial[0] == expected);
}

TEST_CASE("textfooler with empty candidate lists") {
  const GoodWorld w = good_world();
  GoodModel model;
  AttackConfig config;
  config.min_word_cosine = 1.01;
  const auto ex = example({"the", "food", "was", "good"}, Label::kPositive);
  const AttackResult r = textfooler(model, ex, config, resources_of(w));
  CHECK(r.adversarial == ex.tokens);
  CHECK_FALSE(r.success);
  CHECK(r.status == "no-candidates");
  CHECK(r.queries == 1 + 4);

  config.min_word_cosine = 0.7;
  config.min_sentence_sim = 1.1;
  CHECK(textfooler(model, ex, config, resources_of(w)).adversarial == ex.tokens);
  CHECK_THROWS_AS(textfooler(model, ex, config, {}), ContractError);
}

TEST_CASE("textfooler never touches gradients") {
  const auto& world = test::tiny_world();
  const test::ForbiddenGradientModel guarded(*world.cnn);
  const MeanEmbeddingEncoder encoder(world.data.embeddings);
  const TextFoolerResources res{world.data.counterfit.get(), &encoder, &world.data.tagger};
  AttackConfig config;
  config.max_flips = FlipBudget::absolute(3);
  std::size_t queries = 0;
  const std::span<const corpus::Example> test_set(world.data.splits.test.data(), 60);
  for (const AttackResult& r : run_all(Method::kTextFooler, guarded, test_set, config, res)) queries += r.queries;
  CHECK(guarded.violations == 0);
  CHECK(guarded.predictions == queries);
}

TEST_CASE("result invariants hold for every method") {
  const auto& world = test::tiny_world();
  const Classifier& model = *world.cnn;
  const MeanEmbeddingEncoder encoder(world.data.embeddings);
  const TextFoolerResources res{world.data.counterfit.get(), &encoder, &world.data.tagger};
  const Tensor before = model.embeddings().matrix();
  AttackConfig config;
  config.epsilon = 0.5;
  config.max_flips = FlipBudget::absolute(2);
  const std::span<const corpus::Example> test_set(world.data.splits.test.data(), 40);
  for (Method m : kAllMethods) {
    CAPTURE(to_string(m));
    const auto results = run_all(m, model, test_set, config, res);
    const auto serial = run_all(m, model, test_set, config, res, true);
    REQUIRE(results.size() == test_set.size());
    for (std::size_t i = 0; i < results.size(); ++i) {
      const AttackResult& r = results[i];
      CHECK(r.id == test_set[i].id);
      CHECK(r.method == m);
      CHECK(r.adversarial.size() == r.original.size());
      CHECK(r.flips == hamming(r.original, r.adversarial));
      CHECK(r.success == (r.label_after != r.label_before));
      if (r.success) CHECK(r.adversarial != r.original);
      CHECK(r.label_after == model.predict(r.adversarial).label);
      CHECK(r.attacked == (r.label_before == r.original_label));
      if (!r.attacked) CHECK(r.adversarial == r.original);
      if (m == Method::kHotFlip || m == Method::kTextFooler || m == Method::kTyc) CHECK(r.flips <= 2);
      CHECK(without_time(r) == without_time(serial[i]));
      CHECK(r.queries >= 1);
    }
  }
  CHECK(model.embeddings().matrix() == before);
}

TEST_CASE("greedy attacks are monotone in the flip budget") {
  const auto& world = test::tiny_world();
  const Classifier& model = *world.cnn;
  const MeanEmbeddingEncoder encoder(world.data.embeddings);
  const TextFoolerResources res{world.data.counterfit.get(), &encoder, &world.data.tagger};
  const std::span<const corpus::Example> test_set(world.data.splits.test.data(), 60);
  for (Method m : {Method::kHotFlip, Method::kTyc, Method::kTextFooler}) {
    CAPTURE(to_string(m));
    std::vector<bool> previous(test_set.size(), false);
    for (std::size_t b = 1; b <= 4; ++b) {
      AttackConfig config;
      config.epsilon = 0.5;
      config.max_flips = FlipBudget::absolute(b);
      const auto results = run_all(m, model, test_set, config, res);
      for (std::size_t i = 0; i < results.size(); ++i) {
        if (previous[i]) CHECK(results[i].success);
        previous[i] = results[i].success;
      }
    }
  }
}

TEST_CASE("beam search keeps the invariants") {
  const auto& world = test::tiny_world();
  AttackConfig config;
  config.beam_width = 3;
  config.max_flips = FlipBudget::absolute(3);
  for (std::size_t i = 0; i < 15; ++i) {
    const auto& ex = world.data.splits.test[i];
    for (Method m : {Method::kHotFlip, Method::kTyc}) {
      const AttackResult a = run_attack(m, *world.cnn, ex, config);
      CHECK(a.flips <= 3);
      CHECK(a.success == (a.label_after != a.label_before));
      CHECK(without_time(a) == without_time(run_attack(m, *world.cnn, ex, config)));
    }
  }
}

TEST_CASE("flip budgets") {
  CHECK(FlipBudget::parse("3") == FlipBudget::absolute(3));
  CHECK(FlipBudget::parse("10%") == FlipBudget::fraction(0.1));
  CHECK(FlipBudget::parse("0.5") == FlipBudget::fraction(0.5));
  CHECK(FlipBudget::parse("100%").resolve(7) == 7);
  CHECK(FlipBudget::fraction(0.1).resolve(11) == 2);
  CHECK(FlipBudget::fraction(0.1).resolve(3) == 1);
  CHECK(FlipBudget::absolute(7).resolve(4) == 4);
  CHECK(FlipBudget::fraction(0.25).to_string() == "25%");
  CHECK(FlipBudget::absolute(2).to_string() == "2");
  CHECK_THROWS_AS(FlipBudget::parse("0"), ContractError);
  CHECK_THROWS_AS(FlipBudget::parse("150%"), ContractError);
  CHECK_THROWS_AS(FlipBudget::parse("abc"), ContractError);
  CHECK_THROWS_AS(FlipBudget::parse(""), ContractError);
  CHECK_THROWS_AS(FlipBudget::fraction(0.0), ContractError);

  AttackConfig c;
  c.epsilon = 0.0;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = AttackConfig{};
  c.n_steps = 0;
  CHECK_THROWS_AS(c.validate(), ContractError);
}

TEST_CASE("methods and result serialisation") {
  for (Method m : kAllMethods) CHECK(parse_method(to_string(m)) == m);
  CHECK_THROWS_AS(parse_method("pgd"), ContractError);
  CHECK(is_white_box(Method::kHotFlip));
  CHECK_FALSE(is_white_box(Method::kTextFooler));

  AttackResult r;
  r.id = "e1";
  r.method = Method::kTyc;
  r.original = {"a", "b"};
  r.adversarial = {"a", "c"};
  r.original_label = Label::kPositive;
  r.label_before = Label::kPositive;
  r.label_after = Label::kNegative;
  r.attacked = true;
  r.success = true;
  r.flips = 1;
  r.queries = 9;
  r.wall_time = 0.25;
  r.status = "ok";
  const auto dir = test::temp_dir("attack-results");
  const std::vector<AttackResult> all{r, r};
  write_results(dir / "r.jsonl", all);
  const auto back = read_results(dir / "r.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(to_json(back[1]) == to_json(r));
  std::ofstream(dir / "bad.jsonl") << to_json(r).dump() << "\n{broken\n";
  CHECK_THROWS_AS(read_results(dir / "bad.jsonl"), FormatError);
  CHECK(delete_token(std::vector<std::string>{"x"}, 0) == std::vector<std::string>{"<unk>"});
  CHECK(delete_token(std::vector<std::string>{"x", "y", "z"}, 1) == std::vector<std::string>{"x", "z"});
  CHECK_THROWS_AS(hamming(std::vector<std::string>{"a"}, std::vector<std::string>{}), ContractError);
  std::filesystem::remove_all(dir);
}
