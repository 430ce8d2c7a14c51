#include "choicematch/selftest.hpp"

#include <cmath>
#include <functional>
#include <ostream>
#include <string>

#include "choicematch/errors.hpp"
#include "choicematch/eval_harness.hpp"
#include "choicematch/random.hpp"
#include "choicematch/synthetic.hpp"
#include "choicematch/training.hpp"
#include "choicematch/triplet_paraphrase.hpp"

namespace choicematch {

namespace {

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

void require(bool ok, const std::string& what) {
  if (!ok) throw InvariantError(what);
}

void check_matching() {
  const Vector x{0.0, 0.0};
  require(near(match(x, {{3.0, 4.0}})[0], 5.0, 1e-12), "distance of (0,0) to (3,4) is not 5");
  const auto p = probabilities(Vector{1.0, 2.0});
  require(near(p[0], 0.7311, 1e-4) && near(p[1], 0.2689, 1e-4), "softmax of -[1,2]");
  require(predict(Vector{0.25, 0.25, 0.25, 0.25}) == 0, "ties must resolve to the lowest index");
  require(near(loss(Vector{0.5, 0.5}, 0), std::log(2.0), 1e-12), "loss at P=0.5 is not ln 2");
  require(loss(Vector{1.0}, 0) == 0.0, "single-choice loss is not 0");
}

void check_aggregate() {
  const auto a = aggregate({1.0, 0.0, 1.0, 0.0});
  require(near(a.mean, 0.5, 1e-12), "aggregate mean");
  require(near(a.std, 0.5774, 1e-4), "aggregate sample std");
  require(near(a.ci, 0.5659, 1e-4), "aggregate ci");
  const auto one = aggregate({0.5});
  require(one.degenerate && one.ci == 0.0 && one.std == 0.0, "single-episode aggregate");
}

void check_episodes() {
  RelationCorpusSpec spec;
  spec.relations = 12;
  spec.train_relations = 8;
  spec.instances_per_relation = 12;
  const auto corpus = make_relation_corpus(spec);
  for (double rate : {0.0, 0.15, 0.5}) {
    EpisodeSpec es{4, 2, 10, rate};
    for (std::uint64_t s = 0; s < 50; ++s) {
      const auto ep = sample_episode(corpus, Split::train, es, s);
      check_episode(ep, es);
    }
  }
  require(nota_query_count(0.15, 10) == 2 && nota_query_count(0.5, 5) == 3, "NOTA rounding");
}

void check_pipeline() {
  const Tokens sentence = split_whitespace(
      "The service traces its history to an online service known as PlayNET .");
  const auto triplets = extract_triplets(sentence);
  bool found = false;
  for (const auto& t : triplets)
    if (join_tokens(wrap_triplet(t)) == "[H] an online service [R] known as [T] PlayNET") found = true;
  require(found, "appositive triplet missing from the extraction");
  const auto wrapped = split_whitespace("[H] an online service [R] known as [T] PlayNET");
  require(join_tokens(generate_paraphrase(wrapped, 0).paraphrase) ==
              "as for playnet , an online service known as .",
          "template 0 paraphrase");
  require(join_tokens(generate_paraphrase(wrapped, 1).paraphrase) ==
              "there is an online service that known as playnet .",
          "template 1 paraphrase");
}

Model tiny_model(const LabeledCorpus& corpus) {
  std::vector<Tokens> texts;
  for (const auto& inst : corpus.instances) texts.push_back(inst.tokens);
  for (const auto& [id, rel] : corpus.relations) texts.push_back(rel.description);
  EncoderConfig ec;
  ec.hidden_dim = 8;
  ec.layers = 1;
  ec.heads = 2;
  ec.ffn_dim = 16;
  ec.max_positions = 48;
  ec.seed = 3;
  return make_tiny_model(Vocabulary::build(texts), ec);
}

void check_restore_and_gradient() {
  RelationCorpusSpec spec;
  spec.relations = 6;
  spec.train_relations = 4;
  spec.instances_per_relation = 4;
  const auto corpus = make_relation_corpus(spec);
  Model model = tiny_model(corpus);
  const EpisodeSpec es{3, 1, 3, 0.0};
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto ep = sample_episode(corpus, Split::train, es, s);
    const auto inputs = episode_inputs(model, ep);
    std::vector<ModelInput> queries;
    for (const auto& q : inputs.queries) queries.push_back(q.input);
    const auto before = model.params.digest();
    const auto r = adapt_and_predict(model, inputs.support, queries, {2, 0.05, true, s});
    require(r.digest_before == before && model.params.digest() == before, "restore law");
  }

  const auto ep = sample_episode(corpus, Split::train, es, 99);
  const auto ex = episode_inputs(model, ep).queries.front();
  const auto g = gradients(model.params, ex.input, [&](const EncodedSequence& e, Matrix& d) {
    return loss_and_gradient(e, ex.input, ex.gold, d);
  });
  const auto f = [&](const EncoderParams& p) {
    return *score(encode(p, ex.input, Mode::eval), ex.input, ex.gold).loss;
  };
  Rng rng(7);
  for (int k = 0; k < 20; ++k) {
    const std::size_t t = rng.below(model.params.tensors.size());
    const std::size_t i = rng.below(model.params.tensors[t].data.size());
    EncoderParams p = model.params;
    const double h = 1e-5;
    p.tensors[t].data[i] += h;
    const double up = f(p);
    p.tensors[t].data[i] -= 2 * h;
    const double down = f(p);
    const double fd = (up - down) / (2 * h);
    const double an = g.grads.tensors[t].data[i];
    require(std::abs(fd - an) <= 1e-3 * std::max(std::abs(fd), std::abs(an)) + 1e-7,
            "gradient of " + model.params.tensors[t].name + " disagrees with finite differences");
  }
}

void check_hash_backend() {
  for (TokenId id : {0, 1, 17, 4000}) {
    const auto v = hash_vector(id, 32);
    double n = 0.0;
    for (double x : v) n += x * x;
    require(near(std::sqrt(n), 1.0, 1e-9), "hash vector is not unit length");
  }
}

}  // namespace

int run_selftest(std::ostream& out) {
  const std::pair<const char*, std::function<void()>> checks[] = {
      {"matching arithmetic", check_matching},
      {"aggregation", check_aggregate},
      {"episode invariants", check_episodes},
      {"triplet pipeline", check_pipeline},
      {"restore law and gradients", check_restore_and_gradient},
      {"hash backend", check_hash_backend},
  };
  int failures = 0;
  for (const auto& [name, fn] : checks) {
    try {
      fn();
      out << "ok    " << name << '\n';
    } catch (const std::exception& e) {
      ++failures;
      out << "FAIL  " << name << ": " << e.what() << '\n';
    }
  }
  return failures;
}

}  // namespace choicematch
