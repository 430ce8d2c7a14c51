#include <cmath>
#include <numeric>
#include <sstream>

#include <omp.h>

#include "choicematch/errors.hpp"
#include "choicematch/random.hpp"
#include "choicematch/synthetic.hpp"
#include "choicematch/training.hpp"
#include "doctest.h"

using namespace choicematch;

namespace {

const LabeledCorpus& corpus() {
  static const LabeledCorpus c = [] {
    RelationCorpusSpec s;
    s.relations = 16;
    s.train_relations = 12;
    s.instances_per_relation = 20;
    return make_relation_corpus(s);
  }();
  return c;
}

Model small_model(const std::vector<Tokens>& texts, std::size_t d = 8, double dropout = 0.0) {
  EncoderConfig ec;
  ec.hidden_dim = d;
  ec.layers = 1;
  ec.heads = 2;
  ec.ffn_dim = 2 * d;
  ec.max_positions = 64;
  ec.dropout = dropout;
  ec.seed = 21;
  return make_tiny_model(Vocabulary::build(texts), ec);
}

std::vector<Tokens> corpus_texts(const LabeledCorpus& c) {
  std::vector<Tokens> t;
  for (const auto& i : c.instances) t.push_back(i.tokens);
  for (const auto& [id, r] : c.relations) t.push_back(r.description);
  return t;
}

std::vector<Tokens> pseudo_texts(const std::vector<PseudoBatch>& batches) {
  std::vector<Tokens> t;
  for (const auto& b : batches)
    for (const auto& i : b.instances) t.push_back(i.paraphrase);
  return t;
}

std::vector<PseudoBatch> pseudo_corpus(std::size_t sentences, std::size_t batch) {
  RawSentenceSpec rs;
  rs.sentences = sentences;
  return build_pretraining_corpus(make_raw_sentences(rs, corpus()), {batch, 3, 6});
}

TrainConfig quick(double lr = 1e-3) {
  TrainConfig t;
  t.lr = lr;
  t.dropout = 0.0;
  t.seed = 4;
  return t;
}

}  // namespace

TEST_CASE("AdamW matches a scalar oracle") {
  EncoderParams p;
  p.tensors.push_back({"w", {2}, {0.5, -1.0}});
  EncoderParams g = p.zeros_like();
  AdamW opt(p, 0.01);
  double m[2] = {0, 0}, v[2] = {0, 0}, w[2] = {0.5, -1.0};
  const double grads[3][2] = {{0.2, -0.4}, {0.1, 0.3}, {-0.5, 0.05}};
  for (int t = 1; t <= 3; ++t) {
    g.tensors[0].data = {grads[t - 1][0], grads[t - 1][1]};
    opt.step(p, g, 0.1);
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * grads[t - 1][i];
      v[i] = 0.999 * v[i] + 0.001 * grads[t - 1][i] * grads[t - 1][i];
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      w[i] -= 0.1 * (mh / (std::sqrt(vh) + 1e-8) + 0.01 * w[i]);
      CHECK(p.tensors[0].data[i] == doctest::Approx(w[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("gradient clipping") {
  EncoderParams g;
  g.tensors.push_back({"w", {2}, {3.0, 4.0}});
  CHECK(clip_gradients(g, 1.0) == doctest::Approx(5.0));
  CHECK(g.tensors[0].data[0] == doctest::Approx(0.6));
  CHECK(std::sqrt(g.squared_norm()) == doctest::Approx(1.0));
  CHECK(clip_gradients(g, 10.0) == doctest::Approx(1.0));
  CHECK(g.tensors[0].data[1] == doctest::Approx(0.8));
}

TEST_CASE("trace CSV") {
  std::stringstream ss;
  write_trace_csv({{0, 0.5, 1e-3}, {1, 0.25, 1e-3}}, ss, "command=x");
  CHECK(ss.str() == "# command=x\nstep,loss,lr\n0,0.5,0.001\n1,0.25,0.001\n");
}

TEST_CASE("train config validation") {
  TrainConfig t;
  t.lr_decay = 0.0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = TrainConfig{};
  t.clip_norm = 0.0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = TrainConfig{};
  t.lr = -1.0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
}

TEST_CASE("batch gradients do not depend on the thread count") {
  const auto& c = corpus();
  const Model m = small_model(corpus_texts(c), 8, 0.2);
  const auto ep = sample_episode(c, Split::train, {5, 2, 30, 0.0}, 3);
  auto in = episode_inputs(m, ep);
  in.support.insert(in.support.end(), in.queries.begin(), in.queries.end());
  const int before = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto a = batch_gradient(m, in.support, Mode::train, 77);
  omp_set_num_threads(3);
  const auto b = batch_gradient(m, in.support, Mode::train, 77);
  omp_set_num_threads(before);
  CHECK(a.loss == b.loss);
  CHECK(a.grads.serialize() == b.grads.serialize());
}

TEST_CASE("pretrain degenerate batches and the frozen control") {
  const auto b1 = pseudo_corpus(60, 1);
  Model m = small_model(pseudo_texts(b1));
  auto cfg = quick();
  cfg.batch_size = 1;
  for (const auto& r : pretrain(m, b1, cfg).trace) CHECK(r.loss == 0.0);

  const auto b4 = pseudo_corpus(60, 4);
  Model frozen = small_model(pseudo_texts(b4));
  const auto digest = frozen.params.digest();
  cfg = quick(0.0);
  cfg.epochs = 2;
  const auto trace = pretrain(frozen, b4, cfg).trace;
  CHECK(frozen.params.digest() == digest);
  REQUIRE(trace.size() == 2 * b4.size());
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < 2; ++epoch) {
    for (const auto& batch : b4) {
      // Forward-only evaluation under the same choice order.
      std::vector<std::size_t> order(batch.choices.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng rng(hash_combine(hash_combine(cfg.seed, epoch), batch.id));
      shuffle(order, rng);
      CHECK(trace[step++].loss == doctest::Approx(mean_loss(frozen, batch_examples(frozen, batch, order))).epsilon(1e-12));
    }
  }
}

TEST_CASE("pretraining lowers the epoch loss on a 200-pair pseudo-corpus") {
  auto batches = pseudo_corpus(240, 8);
  REQUIRE(batches.size() >= 25);
  batches.resize(25);
  std::size_t pairs = 0;
  for (const auto& b : batches) pairs += b.instances.size();
  CHECK(pairs == 200);
  Model m = small_model(pseudo_texts(batches), 16);
  std::vector<double> epoch_loss;
  double initial = 0.0;
  for (const auto& b : batches) {
    std::vector<std::size_t> order(b.choices.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    initial += mean_loss(m, batch_examples(m, b, order));
  }
  epoch_loss.push_back(initial / static_cast<double>(batches.size()));
  auto cfg = quick(3e-3);
  cfg.epochs = 3;
  const auto trace = pretrain(m, batches, cfg).trace;
  for (std::size_t e = 0; e < 3; ++e) {
    double s = 0.0;
    for (std::size_t i = 0; i < batches.size(); ++i) s += trace[e * batches.size() + i].loss;
    epoch_loss.push_back(s / static_cast<double>(batches.size()));
  }
  int falls = 0;
  for (std::size_t e = 1; e < epoch_loss.size(); ++e) falls += epoch_loss[e] < epoch_loss[e - 1];
  CHECK(falls >= 2);
}

TEST_CASE("meta-training: single choice, determinism, no global label set") {
  const auto& c = corpus();
  const auto texts = corpus_texts(c);
  EpisodeSampling one;
  one.ways = {1};
  one.queries = 3;
  auto cfg = quick();
  cfg.steps = 5;
  Model m1 = small_model(texts);
  for (const auto& r : meta_train(m1, c, one, cfg).trace) CHECK(r.loss == 0.0);

  EpisodeSampling s;
  s.ways = {3, 4};
  s.shots = {1, 2};
  s.queries = 4;
  s.nota_rates = {0.0, 0.5};
  cfg.steps = 6;
  Model a = small_model(texts), b = small_model(texts);
  const auto ra = meta_train(a, c, s, cfg);
  const auto rb = meta_train(b, c, s, cfg);
  CHECK(a.params.serialize() == b.params.serialize());
  REQUIRE(ra.trace.size() == rb.trace.size());
  for (std::size_t i = 0; i < ra.trace.size(); ++i) CHECK(ra.trace[i].loss == rb.trace[i].loss);

  std::set<std::string> used;
  for (const auto& step : ra.relations_seen) used.insert(step.begin(), step.end());
  std::string victim;
  for (const auto& id : c.relations_in(Split::train))
    if (!used.count(id)) victim = id;
  REQUIRE(!victim.empty());
  LabeledCorpus pruned;
  for (const auto& inst : c.instances)
    if (*inst.relation != victim) pruned.instances.push_back(inst);
  pruned.relations = c.relations;
  pruned.splits = c.splits;
  pruned.relations.erase(victim);
  pruned.splits.erase(victim);
  Model p = small_model(texts);
  const auto rp = meta_train(p, pruned, s, cfg);
  std::stringstream ta, tp;
  write_trace_csv(ra.trace, ta);
  write_trace_csv(rp.trace, tp);
  CHECK(ta.str() == tp.str());
  CHECK(p.params.serialize() == a.params.serialize());
}

TEST_CASE("online adaptation") {
  const auto& c = corpus();
  Model m = small_model(corpus_texts(c), 8, 0.1);
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto ep = sample_episode(c, Split::test, {3, 2, 6, 0.0}, seed);
    const auto in = episode_inputs(m, ep);
    std::vector<ModelInput> queries;
    for (const auto& q : in.queries) queries.push_back(q.input);
    const auto digest = m.params.digest();
    const auto direct = predict_inputs(m, queries);
    const auto zero = adapt_and_predict(m, in.support, queries, {0, 1e-3, true, seed});
    for (std::size_t i = 0; i < direct.size(); ++i) {
      CHECK(zero.predictions[i].predicted == direct[i].predicted);
      CHECK(zero.predictions[i].distances == direct[i].distances);
    }
    for (std::size_t n : {1, 2, 5}) {
      const auto r = adapt_and_predict(m, in.support, queries, {n, 1e-2, true, seed});
      CHECK(r.digest_before == digest);
      CHECK(r.digest_after == digest);
      CHECK(m.params.digest() == digest);
    }
  }

  // Ablation: without restore the parameters move.
  Model moved = m;
  const auto ep = sample_episode(c, Split::test, {3, 1, 3, 0.0}, 1);
  const auto in = episode_inputs(moved, ep);
  const auto r = adapt_and_predict(moved, in.support, {in.queries[0].input}, {2, 1e-2, false, 0});
  CHECK(r.digest_after != r.digest_before);
  CHECK(moved.params.digest() != m.params.digest());
}

TEST_CASE("adaptation lowers the support loss on a separable episode") {
  const auto& c = corpus();
  Model m = small_model(corpus_texts(c), 16, 0.0);
  const auto ep = sample_episode(c, Split::test, {3, 3, 3, 0.0}, 5);
  const auto in = episode_inputs(m, ep);
  std::vector<ModelInput> support_inputs;
  for (const auto& s : in.support) support_inputs.push_back(s.input);
  const auto support_loss = [&](std::size_t epochs) {
    const auto r = adapt_and_predict(m, in.support, support_inputs, {epochs, 1e-3, true, 0});
    double l = 0.0;
    for (std::size_t i = 0; i < r.predictions.size(); ++i)
      l -= std::log(r.predictions[i].probabilities[in.support[i].gold]);
    return l / static_cast<double>(r.predictions.size());
  };
  CHECK(support_loss(2) <= support_loss(0));
}
