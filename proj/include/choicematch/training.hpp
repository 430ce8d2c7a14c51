#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "choicematch/encoder.hpp"
#include "choicematch/matching_head.hpp"
#include "choicematch/prompt_codec.hpp"
#include "choicematch/relation_core.hpp"
#include "choicematch/triplet_paraphrase.hpp"

namespace choicematch {

enum class EncoderProfile { tiny, hash, external };

EncoderProfile parse_profile(std::string_view s);
std::string_view profile_name(EncoderProfile p);

/// Encoder plus everything needed to turn instances into encoder inputs.
struct Model {
  EncoderProfile profile = EncoderProfile::tiny;
  EncoderParams params;
  Vocabulary vocab;
  std::size_t hash_dim = 64;
  std::size_t max_len = kDefaultMaxLen;
  InstancePooling pooling = InstancePooling::opening_markers;

  EncodedSequence encode(const ModelInput& input, Mode mode = Mode::eval,
                         std::uint64_t dropout_seed = 0) const;
  bool trainable() const { return profile == EncoderProfile::tiny; }
};

/// Fresh tiny-profile model whose embedding table covers `vocab`.
Model make_tiny_model(Vocabulary vocab, EncoderConfig config);

struct Example {
  ModelInput input;
  std::size_t gold = 0;
};

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double dropout = 0.1;
  double lr_decay = 1.0;  // multiplied into lr after every epoch
  std::size_t epochs = 1;
  std::size_t steps = 1000;  // episodes, for meta-training
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  double clip_norm = 1.0;

  void validate() const;
};

struct AdaptConfig {
  std::size_t epochs = 0;
  double lr = 1e-3;
  bool restore = true;
  std::uint64_t seed = 0;
};

struct TraceRow {
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

using Trace = std::vector<TraceRow>;

void write_trace_csv(const Trace& trace, std::ostream& out, const std::string& header_comment = "");

/// Decoupled-weight-decay Adam.
class AdamW {
 public:
  AdamW(const EncoderParams& like, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8);
  void step(EncoderParams& params, const EncoderParams& grads, double lr);

 private:
  EncoderParams m_, v_;
  double weight_decay_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

struct BatchGradient {
  double loss = 0.0;  // mean over examples
  EncoderParams grads;  // gradient of the mean loss
};

/// Mean loss over `examples` and its gradient. Examples run in parallel, each
/// into its own gradient buffer; buffers are summed in example order.
BatchGradient batch_gradient(const Model& model, const std::vector<Example>& examples, Mode mode,
                             std::uint64_t dropout_seed);

/// Eval-mode mean loss without gradients.
double mean_loss(const Model& model, const std::vector<Example>& examples);

std::vector<MatchResult> predict_inputs(const Model& model, const std::vector<ModelInput>& inputs);

/// Scales `grads` so its global norm is at most `max_norm`; returns the norm.
double clip_gradients(EncoderParams& grads, double max_norm);

struct TrainResult {
  Trace trace;
  /// Meta-training only: corpus relations each step drew instances from.
  std::vector<std::set<std::string>> relations_seen;
};

/// One AdamW step per batch on the in-batch multi-choice loss.
TrainResult pretrain(Model& model, const std::vector<PseudoBatch>& batches, const TrainConfig& cfg);

/// Examples for one pre-training batch with its choices in `order`.
std::vector<Example> batch_examples(const Model& model, const PseudoBatch& batch,
                                    const std::vector<std::size_t>& order);

/// Ranges the episode shape is drawn from at each meta-training iteration.
struct EpisodeSampling {
  std::vector<std::size_t> ways{5};
  std::vector<std::size_t> shots{1};
  std::size_t queries = 5;
  std::vector<double> nota_rates{0.0};
};

/// Each step samples a fresh training-split episode, shuffles its choices
/// (NOTA stays last) and takes one AdamW step on support and query instances.
TrainResult meta_train(Model& model, const LabeledCorpus& corpus, const EpisodeSampling& sampling,
                       const TrainConfig& cfg);

struct EpisodeInputs {
  std::vector<Example> support;
  std::vector<Example> queries;
};

/// Prompt from the episode's declared choice order.
EpisodeInputs episode_inputs(const Model& model, const Episode& episode);

struct AdaptResult {
  std::vector<MatchResult> predictions;
  std::uint64_t digest_before = 0;
  std::uint64_t digest_after = 0;
};

/// Online adaptation: snapshot, `epochs` full-batch gradient steps on the
/// mean support loss, predict the queries, restore. Throws
/// RestoreMismatchError if the parameters are not restored bit-exactly.
AdaptResult adapt_and_predict(Model& model, const std::vector<Example>& support,
                              const std::vector<ModelInput>& queries, const AdaptConfig& adapt);

}  // namespace choicematch
