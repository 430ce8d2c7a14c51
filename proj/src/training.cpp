#include "choicematch/training.hpp"

#include <cmath>
#include <numeric>
#include <ostream>

#include "choicematch/errors.hpp"
#include "choicematch/random.hpp"

namespace choicematch {

namespace {

// Examples per gradient-buffer chunk; fixed so reduction order never depends
// on the thread count.
constexpr std::size_t kChunk = 16;

}  // namespace

EncoderProfile parse_profile(std::string_view s) {
  if (s == "tiny") return EncoderProfile::tiny;
  if (s == "hash") return EncoderProfile::hash;
  if (s == "external") return EncoderProfile::external;
  throw ConfigError("unknown encoder profile '" + std::string(s) + "'");
}

std::string_view profile_name(EncoderProfile p) {
  switch (p) {
    case EncoderProfile::tiny: return "tiny";
    case EncoderProfile::hash: return "hash";
    case EncoderProfile::external: return "external";
  }
  return "tiny";
}

EncodedSequence Model::encode(const ModelInput& input, Mode mode, std::uint64_t dropout_seed) const {
  switch (profile) {
    case EncoderProfile::tiny: return choicematch::encode(params, input, mode, dropout_seed);
    case EncoderProfile::hash: return encode_hash(input, hash_dim);
    case EncoderProfile::external: break;
  }
  throw ConfigError("the external encoder profile has no backend in this build");
}

Model make_tiny_model(Vocabulary vocab, EncoderConfig config) {
  config.vocab_size = vocab.size();
  config.max_positions = std::max(config.max_positions, std::size_t{1});
  Model m;
  m.profile = EncoderProfile::tiny;
  m.params = init_params(config);
  m.vocab = std::move(vocab);
  m.max_len = config.max_positions;
  return m;
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must lie in (0, 1]");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

void write_trace_csv(const Trace& trace, std::ostream& out, const std::string& header_comment) {
  if (!header_comment.empty()) out << "# " << header_comment << '\n';
  out << "step,loss,lr\n";
  char buf[128];
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", r.step, r.loss, r.lr);
    out << buf;
  }
}

AdamW::AdamW(const EncoderParams& like, double weight_decay, double beta1, double beta2, double eps)
    : m_(like.zeros_like()),
      v_(like.zeros_like()),
      weight_decay_(weight_decay),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {}

void AdamW::step(EncoderParams& params, const EncoderParams& grads, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    auto& p = params.tensors[i].data;
    const auto& g = grads.tensors[i].data;
    auto& m = m_.tensors[i].data;
    auto& v = v_.tensors[i].data;
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      const double update = (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
      p[k] -= lr * (update + weight_decay_ * p[k]);
    }
  }
}

BatchGradient batch_gradient(const Model& model, const std::vector<Example>& examples, Mode mode,
                             std::uint64_t dropout_seed) {
  if (!model.trainable()) throw ConfigError("encoder profile is not trainable");
  BatchGradient out;
  out.grads = model.params.zeros_like();
  if (examples.empty()) return out;

  const double scale = 1.0 / static_cast<double>(examples.size());
  std::vector<double> losses(examples.size());
  for (std::size_t begin = 0; begin < examples.size(); begin += kChunk) {
    const std::size_t end = std::min(examples.size(), begin + kChunk);
    std::vector<EncoderParams> buffers(end - begin);
    const auto count = static_cast<std::ptrdiff_t>(end - begin);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t k = 0; k < count; ++k) {
      const std::size_t i = begin + static_cast<std::size_t>(k);
      const Example& ex = examples[i];
      ForwardCache cache;
      const auto enc = encode(model.params, ex.input, mode, hash_combine(dropout_seed, i), cache);
      Matrix d_out(enc.rows, enc.cols);
      losses[i] = loss_and_gradient(enc, ex.input, ex.gold, d_out, model.pooling);
      buffers[static_cast<std::size_t>(k)] = model.params.zeros_like();
      backward(model.params, cache, d_out, buffers[static_cast<std::size_t>(k)]);
    }
    for (const auto& b : buffers) out.grads.add_scaled(b, scale);
  }
  for (double l : losses) out.loss += l;
  out.loss *= scale;
  if (!std::isfinite(out.loss)) throw DivergenceError("training loss became non-finite");
  if (!out.grads.all_finite()) throw NonFiniteGradientError("gradient has non-finite entries");
  return out;
}

double mean_loss(const Model& model, const std::vector<Example>& examples) {
  if (examples.empty()) return 0.0;
  std::vector<double> losses(examples.size());
  const auto n = static_cast<std::ptrdiff_t>(examples.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    const auto& ex = examples[static_cast<std::size_t>(k)];
    const auto enc = model.encode(ex.input);
    losses[static_cast<std::size_t>(k)] = *score(enc, ex.input, ex.gold, model.pooling).loss;
  }
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
}

std::vector<MatchResult> predict_inputs(const Model& model, const std::vector<ModelInput>& inputs) {
  std::vector<MatchResult> out(inputs.size());
  const auto n = static_cast<std::ptrdiff_t>(inputs.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    const auto& in = inputs[static_cast<std::size_t>(k)];
    out[static_cast<std::size_t>(k)] = score(model.encode(in), in, std::nullopt, model.pooling);
  }
  return out;
}

double clip_gradients(EncoderParams& grads, double max_norm) {
  const double norm = std::sqrt(grads.squared_norm());
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& t : grads.tensors)
      for (auto& v : t.data) v *= s;
  }
  return norm;
}

std::vector<Example> batch_examples(const Model& model, const PseudoBatch& batch,
                                    const std::vector<std::size_t>& order) {
  // order[j] = index into batch.choices shown at prompt position j.
  std::vector<Tokens> shown;
  std::vector<std::size_t> position(batch.choices.size());
  for (std::size_t j = 0; j < order.size(); ++j) {
    shown.push_back(batch.choices[order[j]]);
    position[order[j]] = j;
  }
  const auto prompt = build_choice_prompt(shown);
  std::vector<Example> out;
  out.reserve(batch.instances.size());
  for (std::size_t i = 0; i < batch.instances.size(); ++i) {
    const auto inst = batch.instances[i].to_instance();
    out.push_back({assemble_input(prompt, wrap_instance(inst), model.vocab, model.max_len),
                   position[batch.gold[i]]});
  }
  return out;
}

namespace {

struct TrainingPeriod {
  Model& model;
  const TrainConfig& cfg;
  AdamW optimizer;
  double saved_dropout;

  TrainingPeriod(Model& m, const TrainConfig& c)
      : model(m), cfg(c), optimizer(m.params, c.weight_decay), saved_dropout(m.params.config.dropout) {
    cfg.validate();
    if (!model.trainable()) throw ConfigError("encoder profile is not trainable");
    model.params.config.dropout = cfg.dropout;
  }
  ~TrainingPeriod() { model.params.config.dropout = saved_dropout; }

  double step(const std::vector<Example>& examples, double lr, std::uint64_t seed) {
    auto g = batch_gradient(model, examples, Mode::train, seed);
    clip_gradients(g.grads, cfg.clip_norm);
    if (lr > 0.0) optimizer.step(model.params, g.grads, lr);
    if (!model.params.all_finite()) throw DivergenceError("parameters became non-finite");
    return g.loss;
  }
};

}  // namespace

TrainResult pretrain(Model& model, const std::vector<PseudoBatch>& batches, const TrainConfig& cfg) {
  TrainingPeriod period(model, cfg);
  TrainResult out;
  double lr = cfg.lr;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& batch : batches) {
      const std::uint64_t seed = hash_combine(hash_combine(cfg.seed, epoch), batch.id);
      std::vector<std::size_t> order(batch.choices.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng rng(seed);
      shuffle(order, rng);
      const auto examples = batch_examples(model, batch, order);
      const double loss = period.step(examples, lr, seed);
      out.trace.push_back({step++, loss, lr});
    }
    lr *= cfg.lr_decay;
  }
  return out;
}

EpisodeInputs episode_inputs(const Model& model, const Episode& episode) {
  const auto prompt = build_choice_prompt(episode.choices);
  EpisodeInputs out;
  for (std::size_t c = 0; c < episode.choices.size(); ++c) {
    auto it = episode.support.find(episode.choices[c].id);
    if (it == episode.support.end()) continue;
    for (const auto& inst : it->second)
      out.support.push_back({assemble_input(prompt, wrap_instance(inst), model.vocab, model.max_len), c});
  }
  for (const auto& q : episode.queries)
    out.queries.push_back({assemble_input(prompt, wrap_instance(q), model.vocab, model.max_len),
                           episode.choice_index(*q.relation)});
  return out;
}

TrainResult meta_train(Model& model, const LabeledCorpus& corpus, const EpisodeSampling& sampling,
                       const TrainConfig& cfg) {
  if (sampling.ways.empty() || sampling.shots.empty() || sampling.nota_rates.empty())
    throw ConfigError("episode sampling ranges must be nonempty");
  TrainingPeriod period(model, cfg);
  TrainResult out;
  double lr = cfg.lr;
  const std::size_t per_epoch = std::max<std::size_t>(1, cfg.steps / std::max<std::size_t>(1, cfg.epochs));
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    if (step > 0 && step % per_epoch == 0) lr *= cfg.lr_decay;
    const std::uint64_t seed = hash_combine(cfg.seed, 0x6d657461ULL + step);
    Rng rng(seed);
    EpisodeSpec spec;
    spec.way = sampling.ways[rng.below(sampling.ways.size())];
    spec.shot = sampling.shots[rng.below(sampling.shots.size())];
    spec.queries = sampling.queries;
    spec.nota_rate = sampling.nota_rates[rng.below(sampling.nota_rates.size())];
    Episode ep = sample_episode(corpus, Split::train, spec, seed);
    auto& seen = out.relations_seen.emplace_back();
    for (const auto& [id, idx] : ep.support_origin)
      for (auto i : idx) seen.insert(*corpus.instances[i].relation);
    for (auto i : ep.query_origin) seen.insert(*corpus.instances[i].relation);

    const std::size_t regular = spec.way;
    std::vector<RelationType> shuffled(ep.choices.begin(), ep.choices.begin() + static_cast<std::ptrdiff_t>(regular));
    shuffle(shuffled, rng);
    std::copy(shuffled.begin(), shuffled.end(), ep.choices.begin());

    auto inputs = episode_inputs(model, ep);
    std::vector<Example> examples = std::move(inputs.support);
    examples.insert(examples.end(), inputs.queries.begin(), inputs.queries.end());
    const double loss = period.step(examples, lr, seed);
    out.trace.push_back({step, loss, lr});
  }
  return out;
}

AdaptResult adapt_and_predict(Model& model, const std::vector<Example>& support,
                              const std::vector<ModelInput>& queries, const AdaptConfig& adapt) {
  AdaptResult out;
  const bool updates = adapt.epochs > 0 && !support.empty();
  if (updates && !model.trainable()) throw ConfigError("encoder profile is not trainable");

  out.digest_before = model.params.digest();
  const EncoderParams saved = model.params;
  for (std::size_t epoch = 0; epoch < (updates ? adapt.epochs : 0); ++epoch) {
    const auto g = batch_gradient(model, support, Mode::train, hash_combine(adapt.seed, epoch));
    model.params.add_scaled(g.grads, -adapt.lr);
    if (!model.params.all_finite()) {
      model.params = saved;
      throw DivergenceError("adaptation produced non-finite parameters");
    }
  }
  out.predictions = predict_inputs(model, queries);
  if (adapt.restore) {
    model.params = saved;
    out.digest_after = model.params.digest();
    if (out.digest_after != out.digest_before)
      throw RestoreMismatchError("parameters differ after restore");
  } else {
    out.digest_after = model.params.digest();
  }
  return out;
}

}  // namespace choicematch
