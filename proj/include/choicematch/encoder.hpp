#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "choicematch/prompt_codec.hpp"
#include "choicematch/tensor.hpp"
#include "json.hpp"

namespace choicematch {

/// Hyperparameters of the tiny transformer. Defaults are the desk-scale
/// profile; the large pretrained-LM profile used dropout 0.5.
struct EncoderConfig {
  std::size_t vocab_size = kSpecialCount;
  std::size_t hidden_dim = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ffn_dim = 128;
  std::size_t max_positions = kDefaultMaxLen;
  double dropout = 0.1;
  std::uint64_t seed = 0;

  /// Throws ConfigError.
  void validate() const;
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

nlohmann::json to_json(const EncoderConfig& c);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);

struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> data;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// All trainable weights, in a fixed serialization order. Also used as the
/// gradient container (same layout, see zeros_like).
struct EncoderParams {
  EncoderConfig config;
  std::vector<Tensor> tensors;

  std::size_t parameter_count() const;
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  EncoderParams zeros_like() const;
  bool all_finite() const;

  /// Names, shapes and raw values, byte for byte.
  std::vector<unsigned char> serialize() const;
  /// 64-bit digest of serialize().
  std::uint64_t digest() const;

  /// this += scale * other (same layout).
  void add_scaled(const EncoderParams& other, double scale);
  double squared_norm() const;

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

/// V*d + P*d + layers * (4d^2 + 2df + 9d + f)
std::size_t closed_form_parameter_count(const EncoderConfig& c);

/// Deterministic in config.seed: linear maps U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
/// embeddings U(-sqrt(3), sqrt(3)), biases zero, norm gains one.
EncoderParams init_params(const EncoderConfig& config);

enum class Mode { train, eval };

/// One d-dimensional row per input token.
using EncodedSequence = Matrix;

struct LayerCache {
  Matrix input;
  Matrix qkv;
  std::vector<double> probs;
  Matrix ctx;
  std::vector<double> attn_mask;
  Matrix res1;
  std::vector<double> mean1, rstd1;
  Matrix h1;
  Matrix ffn_pre;
  Matrix ffn_act;
  std::vector<double> ffn_mask;
  Matrix res2;
  std::vector<double> mean2, rstd2;
};

/// Activations retained by a forward pass for the backward pass.
struct ForwardCache {
  std::vector<TokenId> ids;
  std::vector<double> embed_mask;
  std::vector<LayerCache> layers;
};

/// Eval mode disables dropout; train mode draws masks from dropout_seed.
EncodedSequence encode(const EncoderParams& params, const ModelInput& input, Mode mode,
                       std::uint64_t dropout_seed = 0);
EncodedSequence encode(const EncoderParams& params, const ModelInput& input, Mode mode,
                       std::uint64_t dropout_seed, ForwardCache& cache);

/// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(output).
void backward(const EncoderParams& params, const ForwardCache& cache, const Matrix& d_output,
              EncoderParams& grads);

/// Consumes the encoder output, returns the loss and writes d(loss)/d(output).
using LossClosure = std::function<double(const EncodedSequence&, Matrix& d_output)>;

struct GradientResult {
  double loss = 0.0;
  EncoderParams grads;
};

GradientResult gradients(const EncoderParams& params, const ModelInput& input,
                         const LossClosure& loss, Mode mode = Mode::eval,
                         std::uint64_t dropout_seed = 0);

/// Deterministic position-free test backend: row p is a pseudorandom unit
/// vector seeded by ids[p] alone.
EncodedSequence encode_hash(const ModelInput& input, std::size_t dim);
std::vector<double> hash_vector(TokenId token, std::size_t dim);

/// Archive: 8-byte magic, u64 LE header length, JSON header (config, tensor
/// names and shapes, metadata), then little-endian float32 values.
void save_checkpoint(const EncoderParams& params, const std::string& path,
                     const nlohmann::json& metadata = nlohmann::json::object());
EncoderParams load_checkpoint(const std::string& path, nlohmann::json* metadata = nullptr);

}  // namespace choicematch
