#include <algorithm>
#include <cmath>
#include <sstream>

#include "choicematch/errors.hpp"
#include "choicematch/eval_harness.hpp"
#include "choicematch/random.hpp"
#include "choicematch/synthetic.hpp"
#include "doctest.h"

using namespace choicematch;

namespace {

std::vector<double> synthetic_accuracies(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> out(n);
  for (auto& x : out) x = static_cast<double>(rng.below(11)) / 10.0;
  return out;
}

Model hash_model(const LabeledCorpus& c) {
  std::vector<Tokens> texts;
  for (const auto& i : c.instances) texts.push_back(i.tokens);
  for (const auto& [id, r] : c.relations) texts.push_back(r.description);
  Model m;
  m.profile = EncoderProfile::hash;
  m.vocab = Vocabulary::build(texts);
  m.hash_dim = 32;
  return m;
}

const LabeledCorpus& corpus() {
  static const LabeledCorpus c = [] {
    RelationCorpusSpec s;
    s.relations = 20;
    s.train_relations = 14;
    s.instances_per_relation = 30;
    return make_relation_corpus(s);
  }();
  return c;
}

}  // namespace

TEST_CASE("aggregate examples") {
  const auto a = aggregate({1, 0, 1, 0});
  CHECK(a.mean == doctest::Approx(0.5));
  CHECK(a.std == doctest::Approx(0.5774).epsilon(1e-4));
  CHECK(a.ci == doctest::Approx(0.5659).epsilon(1e-4));
  CHECK(!a.degenerate);

  const auto one = aggregate({0.5});
  CHECK(one.mean == 0.5);
  CHECK(one.degenerate);
  CHECK(one.ci == 0.0);
  CHECK(one.std == 0.0);

  const auto flat = aggregate({0.7, 0.7, 0.7});
  CHECK(flat.std == doctest::Approx(0.0));
  CHECK(flat.ci == doctest::Approx(0.0));
  const auto all = aggregate({1, 1, 1, 1});
  CHECK(all.mean == 1.0);
  CHECK(all.std == 0.0);
  CHECK(all.ci == 0.0);
  CHECK_THROWS_AS(aggregate({}), EmptyError);
}

TEST_CASE("aggregate is permutation invariant") {
  auto xs = synthetic_accuracies(101, 3);
  const auto a = aggregate(xs);
  Rng rng(1);
  for (int t = 0; t < 10; ++t) {
    shuffle(xs, rng);
    const auto b = aggregate(xs);
    CHECK(b.mean == doctest::Approx(a.mean).epsilon(1e-14));
    CHECK(b.std == doctest::Approx(a.std).epsilon(1e-14));
    CHECK(b.ci == doctest::Approx(a.ci).epsilon(1e-14));
  }
}

TEST_CASE("ci shrinks as one over root T") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto small = aggregate(synthetic_accuracies(2000, seed));
    const auto big = aggregate(synthetic_accuracies(4000, seed + 100));
    const double ratio = small.ci / big.ci;
    CHECK(std::abs(ratio - std::sqrt(2.0)) <= 0.1 * std::sqrt(2.0));
  }
}

TEST_CASE("evaluate: accuracy equals a recount of serialized predictions") {
  const auto& c = corpus();
  const Model m = hash_model(c);
  for (double rate : {0.0, 0.5}) {
    const auto episodes = sample_suite(c, Split::test, {5, 1, 10, rate}, 25, 9);
    const auto r = evaluate(m, episodes, {}, 2);
    CHECK(r.episodes.size() == 25);
    CHECK(r.way == 5);
    CHECK(r.nota_rate == rate);
    CHECK(r.summary.mean >= 0.0);
    CHECK(r.summary.mean <= 1.0);
    const auto doc = results_json(r);
    CHECK(doc["formula"] == "ci95=1.96*std/sqrt(T)");
    CHECK(doc["setting"]["T"] == 25);
    double sum = 0.0;
    for (const auto& e : doc["per_episode"]) {
      std::size_t correct = 0;
      const auto& gold = e["gold"];
      for (std::size_t i = 0; i < gold.size(); ++i)
        correct += match_result_from_json(nlohmann::json::parse(e["predictions"][i].dump())).predicted ==
                   gold[i].get<std::size_t>();
      const double acc = static_cast<double>(correct) / static_cast<double>(gold.size());
      CHECK(e["accuracy"].get<double>() == acc);
      sum += acc;
    }
    CHECK(r.summary.mean == doctest::Approx(sum / 25.0).epsilon(1e-12));
  }
}

TEST_CASE("evaluate is independent of the worker count") {
  const auto& c = corpus();
  const Model m = hash_model(c);
  const auto episodes = sample_suite(c, Split::test, {5, 0, 10, 0.15}, 20, 4);
  const auto a = results_json(evaluate(m, episodes, {}, 1)).dump();
  const auto b = results_json(evaluate(m, episodes, {}, 4)).dump();
  CHECK(a == b);
}

TEST_CASE("per-episode failures name the episode") {
  const auto& c = corpus();
  Model m = hash_model(c);
  auto episodes = sample_suite(c, Split::test, {5, 1, 10, 0.0}, 3, 4);
  episodes[1].queries[0].relation = "missing";
  try {
    evaluate(m, episodes, {}, 1);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("episode 1") != std::string::npos);
  }
  // Adaptation with a frozen backend is a configuration error.
  episodes = sample_suite(c, Split::test, {5, 1, 10, 0.0}, 1, 4);
  CHECK_THROWS_AS(evaluate(m, episodes, {2, 1e-3, true, 0}, 1), Error);
}

TEST_CASE("results CSV") {
  SuiteResult r;
  r.way = 5;
  r.shot = 1;
  r.nota_rate = 0.15;
  r.episodes.resize(4);
  r.summary = aggregate({1, 0, 1, 0});
  std::stringstream ss;
  write_results_csv({r}, ss);
  CHECK(ss.str() == "N,K,nota_rate,T,acc,ci,std\n5,1,0.15,4,0.5000,0.5658,0.5774\n");
}

TEST_CASE("episode_accuracy") {
  std::vector<MatchResult> p(4);
  p[0].predicted = 1;
  p[1].predicted = 0;
  p[2].predicted = 2;
  p[3].predicted = 2;
  CHECK(episode_accuracy(p, {1, 1, 2, 0}) == 0.5);
  CHECK_THROWS_AS(episode_accuracy(p, {1}), DimensionMismatchError);
  CHECK_THROWS_AS(episode_accuracy({}, {}), EmptyError);
}
