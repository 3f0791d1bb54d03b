#include <doctest.h>

#include <cmath>
#include <random>

#include "advtext/errors.hpp"
#include "advtext/kn_lm.hpp"
#include "advtext/metrics.hpp"
#include "support.hpp"

using namespace advtext;
using namespace advtext::metrics;

namespace {

using Tokens = std::vector<std::string>;

class FixedLm final : public LanguageModel {
 public:
  explicit FixedLm(double value) : value_(value) {}
  double log_prob(std::span<const std::string>) const override { return value_; }

 private:
  double value_;
};

// Wraps an encoder and multiplies its output.
class ScaledEncoder final : public SentenceEncoder {
 public:
  ScaledEncoder(const SentenceEncoder& inner, double factor) : inner_(inner), factor_(factor) {}
  std::vector<double> encode(std::span<const std::string> tokens) const override {
    auto v = inner_.encode(tokens);
    for (double& x : v) x *= factor_;
    return v;
  }

 private:
  const SentenceEncoder& inner_;
  double factor_;
};

attacks::AttackResult result(Tokens original, Tokens adversarial, Label gold, Label before, Label after) {
  attacks::AttackResult r;
  r.original = std::move(original);
  r.adversarial = std::move(adversarial);
  r.original_label = gold;
  r.label_before = before;
  r.label_after = after;
  r.attacked = before == gold;
  r.success = after != before;
  r.flips = attacks::hamming(r.original, r.adversarial);
  r.queries = 4;
  return r;
}

std::shared_ptr<const EmbeddingTable> fixture_table() {
  return std::make_shared<const EmbeddingTable>(EmbeddingTable::from_rows(
      {"a", "b", "c", "d", "neg"}, Tensor::matrix(5, 3, {1, 0, 0, 0.5, 1, 0, 0, 0, 2, 1, 1, 1, -1, 0, 0})));
}

}  // namespace

TEST_CASE("bleu fixtures") {
  const Tokens ref{"a", "b", "c", "d"};
  // p1 = 3/4, p2 = 2/3, p3 = 1/2, p4 = (0 + 1) / (1 + 1); no brevity penalty
  const double hand = 100.0 * std::pow(0.75 * (2.0 / 3.0) * 0.5 * 0.5, 0.25);
  CHECK(std::abs(bleu(ref, Tokens{"a", "b", "c", "e"}) - hand) < 1e-9);
  CHECK(std::abs(bleu(ref, Tokens{"a", "b", "c", "e"}) - 59.46035575013605) < 1e-9);
  // c = 2 < r = 4: p1 = 1, p2 = 1, p3 = p4 = 1 / (0 + 1); BP = exp(1 - 2)
  CHECK(std::abs(bleu(ref, Tokens{"a", "b"}) - 100.0 * std::exp(-1.0)) < 1e-9);
  CHECK(bleu(ref, Tokens{}) == 0.0);
  CHECK(bleu(ref, Tokens{"x", "y", "z", "w"}) == 0.0);
  CHECK_THROWS_AS(bleu(Tokens{}, ref), ContractError);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    Tokens r;
    for (std::size_t i = 0, n = 1 + rng() % 20; i < n; ++i) r.push_back(std::string(1, static_cast<char>('a' + rng() % 6)));
    CHECK(bleu(r, r) == doctest::Approx(100.0).epsilon(1e-12));
    Tokens c = r;
    c[rng() % c.size()] = "zz";
    const double b = bleu(r, c);
    CHECK(b >= 0.0);
    CHECK(b <= 100.0);
  }
}

TEST_CASE("sem fixtures and properties") {
  const auto table = fixture_table();
  const MeanEmbeddingEncoder encoder(table);
  const Tokens s1{"a", "b"}, s2{"c", "d"};
  // independent: mean vectors, then cosine by hand
  const double u[] = {1.5, 1.0, 0.0}, v[] = {1.0, 1.0, 3.0};
  const double dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
  const double expected = 100.0 * dot / (std::sqrt(1.5 * 1.5 + 1.0) * std::sqrt(11.0));
  CHECK(std::abs(sem(s1, s2, encoder) - expected) < 1e-9);
  CHECK(sem(s1, s2, encoder) == sem(s2, s1, encoder));
  CHECK(sem(s1, s1, encoder) == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(sem(Tokens{"a"}, Tokens{"neg"}, encoder) == doctest::Approx(-100.0).epsilon(1e-12));
  const ScaledEncoder scaled(encoder, 7.5);
  CHECK(sem(s1, s2, scaled) == doctest::Approx(sem(s1, s2, encoder)).epsilon(1e-12));
  CHECK_THROWS_AS(sem(Tokens{"zzz"}, s1, encoder), ContractError);
  CHECK_THROWS_AS(sem(Tokens{"a", "neg"}, s1, encoder), ContractError);
  CHECK_THROWS_AS(sem(Tokens{}, s1, encoder), ContractError);

  std::mt19937_64 rng(3);
  const auto big = test::random_table(30, 5, 2);
  const MeanEmbeddingEncoder e2(big);
  for (int i = 0; i < 50; ++i) {
    Tokens t;
    for (std::size_t k = 0, n = 1 + rng() % 8; k < n; ++k) t.push_back(big->word(rng() % 30));
    const auto code = e2.encode(t);
    double norm = 0;
    for (double x : code) norm += x * x;
    CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-9);
  }
}

TEST_CASE("acceptability fixtures") {
  CHECK(acceptability(Tokens{"a"}, FixedLm(-3.5)) == -3.5);
  CHECK(std::abs(acceptability(Tokens(7, "w"), FixedLm(-12.0)) - (-12.0 / std::pow(2.0, 0.8))) < 1e-9);
  CHECK(std::abs(acceptability(Tokens(7, "w"), FixedLm(-12.0)) - -6.89219012998221) < 1e-9);
  // same log P, longer sentence, smaller magnitude
  CHECK(std::abs(acceptability(Tokens(9, "w"), FixedLm(-12.0))) < std::abs(acceptability(Tokens(7, "w"), FixedLm(-12.0))));
  CHECK(acceptability(Tokens(4, "w"), FixedLm(-2.0)) > acceptability(Tokens(4, "w"), FixedLm(-2.5)));
  CHECK_THROWS_AS(acceptability(Tokens{"a"}, FixedLm(0.5)), ContractError);
  CHECK_THROWS_AS(acceptability(Tokens{}, FixedLm(-1.0)), ContractError);
  CHECK(acpt(Tokens{"a", "b"}, Tokens{"a", "b"}, FixedLm(-4.0)) == 0.0);
}

TEST_CASE("hand-computed trigram model") {
  const std::vector<Tokens> corpus{{"a", "b"}, {"a", "c"}};
  const KneserNeyLm lm = KneserNeyLm::train(corpus, {.order = 3, .discount = 0.75, .unk_singletons = false});
  CHECK(lm.vocabulary().size() == 5);
  // unigram continuation counts a:1 b:1 c:1 </s>:2 over 4 types, total 5
  const double p1a = 0.25 / 5 + 0.75 * 4 / 5 / 5;
  const double p1eos = 1.25 / 5 + 0.75 * 4 / 5 / 5;
  CHECK(p1a == doctest::Approx(0.17));
  const double p2a_bos = 0.25 + 0.75 * p1a;
  const double p2b_a = 0.25 / 2 + 0.75 * p1a;
  const double p2eos_b = 0.25 + 0.75 * p1eos;
  const double p3a = 1.25 / 2 + 0.75 / 2 * p2a_bos;
  const double p3b = 0.25 / 2 + 0.75 * p2b_a;
  const double p3eos = 0.25 + 0.75 * p2eos_b;
  CHECK(lm.conditional_prob(Tokens{}, "a") == doctest::Approx(p3a).epsilon(1e-12));
  CHECK(p3a == doctest::Approx(0.7665625));
  const double log_ab = std::log(p3a) + std::log(p3b) + std::log(p3eos);
  CHECK(std::abs(lm.log_prob(Tokens{"a", "b"}) - log_ab) < 1e-12);

  // "a a": unseen trigram (<s> a a), then backoff through the unseen context (a a)
  const double p3a_a = 0.75 * (0.75 * p1a);
  const double p3eos_aa = 0.75 * p1eos;
  const double log_aa = std::log(p3a) + std::log(p3a_a) + std::log(p3eos_aa);
  CHECK(std::abs(lm.log_prob(Tokens{"a", "a"}) - log_aa) < 1e-12);
  const double norm = std::pow(7.0 / 6.0, 0.8);
  CHECK(std::abs(acpt(Tokens{"a", "b"}, Tokens{"a", "a"}, lm) - (log_aa - log_ab) / norm) < 1e-9);
  CHECK(acpt(Tokens{"a", "b"}, Tokens{"a", "a"}, lm) < 0.0);
  CHECK(acpt(Tokens{"a", "b"}, Tokens{"a", "b"}, lm) == 0.0);
}

TEST_CASE("single-sentence model prefers its sentence") {
  const Tokens train{"x", "y", "z"};
  const KneserNeyLm lm = KneserNeyLm::train(std::vector<Tokens>{train}, {.unk_singletons = false});
  const Tokens vocab{"x", "y", "z"};
  const double target = lm.log_prob(train);
  std::size_t beaten = 0;
  for (const auto& a : vocab) {
    for (const auto& b : vocab) {
      for (const auto& c : vocab) {
        const Tokens q{a, b, c};
        if (q != train) beaten += lm.log_prob(q) >= target;
      }
    }
  }
  CHECK(beaten == 0);
}

TEST_CASE("conditional distributions normalise") {
  const auto& world = test::tiny_world();
  std::vector<Tokens> corpus;
  for (const auto& e : world.data.splits.train) corpus.push_back(e.tokens);
  corpus.resize(300);
  for (const KneserNeyOptions& options : {KneserNeyOptions{}, KneserNeyOptions{.order = 2, .discount = 0.5},
                                          KneserNeyOptions{.order = 4, .unk_singletons = false}}) {
    const KneserNeyLm lm = KneserNeyLm::train(corpus, options);
    std::mt19937_64 rng(9);
    std::vector<Tokens> contexts{{}, {"never-seen"}, corpus[0], {corpus[1][0]}};
    for (int i = 0; i < 20; ++i) {
      const Tokens& s = corpus[rng() % corpus.size()];
      contexts.emplace_back(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(rng() % s.size()));
    }
    for (const Tokens& ctx : contexts) {
      double sum = 0.0;
      for (const std::string& w : lm.vocabulary()) sum += lm.conditional_prob(ctx, w);
      CHECK(std::abs(sum - 1.0) < 1e-6);
    }
    double held_out = 0.0;
    for (const auto& e : world.data.splits.test) {
      const double lp = lm.log_prob(e.tokens);
      CHECK(std::isfinite(lp));
      CHECK(lp < 0.0);
      held_out += lp;
    }
    CHECK(std::isfinite(held_out));
    CHECK(std::isfinite(lm.log_prob(Tokens{"qqq", "zzz"})));
    Tokens grow;
    for (const std::string& w : corpus[2]) {
      grow.push_back(w);
      CHECK(lm.log_prob(grow) <= 0.0);
    }
  }
  CHECK_THROWS_AS(KneserNeyLm::train(std::vector<Tokens>{}), ContractError);
  CHECK_THROWS_AS(KneserNeyLm::train(corpus, {.discount = 1.5}), ContractError);
}

TEST_CASE("aggregate") {
  const auto table = fixture_table();
  const MeanEmbeddingEncoder encoder(table);
  const std::vector<Tokens> corpus{{"a", "b", "c"}, {"a", "c", "d"}, {"b", "c"}};
  const KneserNeyLm lm = KneserNeyLm::train(corpus);
  const Label P = Label::kPositive, N = Label::kNegative;

  std::vector<attacks::AttackResult> rs{
      result({"a", "b", "c"}, {"a", "d", "c"}, P, P, N),
      result({"a", "c", "d"}, {"b", "c", "d"}, N, N, P),
      result({"b", "c"}, {"b", "c"}, P, P, P),
      result({"c", "d"}, {"c", "d"}, P, N, N),
  };
  const MetricsReport m = aggregate(rs, encoder, lm);
  CHECK(m.n_total == 4);
  CHECK(m.n_successful == 2);
  CHECK(m.acc == 25.0);
  const double b = (bleu(rs[0].original, rs[0].adversarial) + bleu(rs[1].original, rs[1].adversarial)) / 2;
  CHECK(*m.bleu == doctest::Approx(b).epsilon(1e-12));
  CHECK(*m.sem == doctest::Approx((sem(rs[0].original, rs[0].adversarial, encoder) +
                                    sem(rs[1].original, rs[1].adversarial, encoder)) /
                                   2)
                      .epsilon(1e-12));
  CHECK(*m.acpt == doctest::Approx((acpt(rs[0].original, rs[0].adversarial, lm) +
                                     acpt(rs[1].original, rs[1].adversarial, lm)) /
                                    2)
                       .epsilon(1e-12));
  CHECK(m.mean_queries == 4.0);
  CHECK(*m.bleu >= 0.0);
  CHECK(*m.bleu <= 100.0);

  auto injected = rs;
  injected.push_back(result({"a", "b"}, {"a", "b"}, P, P, P));
  const MetricsReport m2 = aggregate(injected, encoder, lm);
  CHECK(*m2.bleu == *m.bleu);
  CHECK(*m2.sem == *m.sem);
  CHECK(*m2.acpt == *m.acpt);
  CHECK(m2.n_successful == 2);

  const std::vector<attacks::AttackResult> failed{rs[2], rs[3]};
  const MetricsReport none = aggregate(failed, encoder, lm);
  CHECK(none.acc == 50.0);
  CHECK_FALSE(none.bleu.has_value());
  CHECK(format_cell(none.bleu) == "--");
  CHECK(format_cell(none.sem) == "--");
  CHECK(format_cell(none.acpt) == "--");
  CHECK(format_cell(59.46, 1) == "59.5");
  CHECK(to_json(none)["bleu"].is_null());
  CHECK(to_json(m)["acc"] == 25.0);
  CHECK(aggregate(std::vector<attacks::AttackResult>{}, encoder, lm).n_total == 0);
}

TEST_CASE("no-op attacks reproduce the classifier accuracy") {
  const auto table = fixture_table();
  const MeanEmbeddingEncoder encoder(table);
  const KneserNeyLm lm = KneserNeyLm::train(std::vector<Tokens>{{"a", "b"}});
  std::vector<attacks::AttackResult> rs;
  for (int i = 0; i < 1000; ++i) {
    const Label pred = i < 968 ? Label::kPositive : Label::kNegative;
    rs.push_back(result({"a", "b"}, {"a", "b"}, Label::kPositive, pred, pred));
  }
  const MetricsReport m = aggregate(rs, encoder, lm);
  CHECK(m.acc == doctest::Approx(96.8).epsilon(1e-12));
  CHECK(m.n_successful == 0);
}
