#include "choicematch/encoder.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "choicematch/errors.hpp"
#include "choicematch/kernels.hpp"
#include "choicematch/random.hpp"

namespace choicematch {

namespace {

constexpr std::size_t kTensorsPerLayer = 12;

enum LayerTensor : std::size_t {
  kQkvW = 0,
  kQkvB,
  kOutW,
  kOutB,
  kLn1G,
  kLn1B,
  kFfnInW,
  kFfnInB,
  kFfnOutW,
  kFfnOutB,
  kLn2G,
  kLn2B,
};

std::size_t layer_index(std::size_t layer, LayerTensor t) {
  return 2 + layer * kTensorsPerLayer + t;
}

std::span<const double> view(const EncoderParams& p, std::size_t layer, LayerTensor t) {
  return p.tensors[layer_index(layer, t)].data;
}

std::span<double> grad(EncoderParams& g, std::size_t layer, LayerTensor t) {
  return g.tensors[layer_index(layer, t)].data;
}

std::vector<double> dropout_mask(std::size_t n, double rate, std::uint64_t seed,
                                 std::uint64_t site) {
  std::vector<double> mask(n);
  Rng rng(hash_combine(seed, site));
  const double keep = 1.0 - rate;
  for (auto& m : mask) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
  return mask;
}

void apply_mask(std::vector<double>& x, const std::vector<double>& mask) {
  if (mask.empty()) return;
  for (std::size_t i = 0; i < x.size(); ++i) x[i] *= mask[i];
}

}  // namespace

void EncoderConfig::validate() const {
  if (hidden_dim < 1 || layers > 64 || heads < 1 || ffn_dim < 1 || max_positions < 1 ||
      vocab_size < kSpecialCount)
    throw ConfigError("encoder dimensions must be positive and the vocabulary must hold the "
                      "reserved tokens");
  if (hidden_dim % heads != 0)
    throw ConfigError("hidden_dim " + std::to_string(hidden_dim) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

nlohmann::json to_json(const EncoderConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"hidden_dim", c.hidden_dim},
          {"layers", c.layers},         {"heads", c.heads},
          {"ffn_dim", c.ffn_dim},       {"max_positions", c.max_positions},
          {"dropout", c.dropout},       {"seed", c.seed}};
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
  c.max_positions = j.at("max_positions").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

std::size_t EncoderParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.data.size();
  return n;
}

const Tensor& EncoderParams::at(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw IndexError("no parameter tensor named '" + name + "'");
}

Tensor& EncoderParams::at(const std::string& name) {
  return const_cast<Tensor&>(std::as_const(*this).at(name));
}

EncoderParams EncoderParams::zeros_like() const {
  EncoderParams z;
  z.config = config;
  z.tensors.reserve(tensors.size());
  for (const auto& t : tensors) z.tensors.push_back({t.name, t.shape, std::vector<double>(t.data.size())});
  return z;
}

bool EncoderParams::all_finite() const {
  for (const auto& t : tensors)
    for (double v : t.data)
      if (!std::isfinite(v)) return false;
  return true;
}

std::vector<unsigned char> EncoderParams::serialize() const {
  std::vector<unsigned char> out;
  auto put_u64 = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
  };
  for (const auto& t : tensors) {
    put_u64(t.name.size());
    out.insert(out.end(), t.name.begin(), t.name.end());
    put_u64(t.shape.size());
    for (auto s : t.shape) put_u64(s);
    for (double v : t.data) put_u64(std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

std::uint64_t EncoderParams::digest() const {
  std::uint64_t h = 0x6469676573740000ULL;
  const auto bytes = serialize();
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    word = (word << 8) | bytes[i];
    if (i % 8 == 7) {
      h = hash_combine(h, word);
      word = 0;
    }
  }
  return hash_combine(h, hash_combine(word, bytes.size()));
}

void EncoderParams::add_scaled(const EncoderParams& other, double scale) {
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& a = tensors[i].data;
    const auto& b = other.tensors[i].data;
    for (std::size_t k = 0; k < a.size(); ++k) a[k] += scale * b[k];
  }
}

double EncoderParams::squared_norm() const {
  double s = 0.0;
  for (const auto& t : tensors)
    for (double v : t.data) s += v * v;
  return s;
}

std::size_t closed_form_parameter_count(const EncoderConfig& c) {
  const std::size_t d = c.hidden_dim;
  const std::size_t f = c.ffn_dim;
  return c.vocab_size * d + c.max_positions * d + c.layers * (4 * d * d + 2 * d * f + 9 * d + f);
}

EncoderParams init_params(const EncoderConfig& config) {
  config.validate();
  const std::size_t d = config.hidden_dim;
  const std::size_t f = config.ffn_dim;
  EncoderParams p;
  p.config = config;

  auto add = [&](std::string name, std::vector<std::size_t> shape, auto fill) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    Tensor t{std::move(name), std::move(shape), std::vector<double>(n)};
    Rng rng(hash_combine(config.seed, fnv1a(t.name)));
    for (auto& v : t.data) v = fill(rng);
    p.tensors.push_back(std::move(t));
  };
  auto uniform = [](double a) { return [a](Rng& r) { return r.uniform(-a, a); }; };
  auto constant = [](double c) { return [c](Rng&) { return c; }; };
  auto linear = [&](const std::string& prefix, std::size_t in, std::size_t out) {
    add(prefix + ".weight", {in, out}, uniform(1.0 / std::sqrt(static_cast<double>(in))));
    add(prefix + ".bias", {out}, constant(0.0));
  };
  auto norm = [&](const std::string& prefix) {
    add(prefix + ".gamma", {d}, constant(1.0));
    add(prefix + ".beta", {d}, constant(0.0));
  };

  add("embed.token", {config.vocab_size, d}, uniform(std::sqrt(3.0)));
  add("embed.position", {config.max_positions, d}, uniform(std::sqrt(3.0)));
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string prefix = "layers." + std::to_string(l);
    linear(prefix + ".attn.qkv", d, 3 * d);
    linear(prefix + ".attn.out", d, d);
    norm(prefix + ".ln1");
    linear(prefix + ".ffn.in", d, f);
    linear(prefix + ".ffn.out", f, d);
    norm(prefix + ".ln2");
  }
  return p;
}

EncodedSequence encode(const EncoderParams& params, const ModelInput& input, Mode mode,
                       std::uint64_t dropout_seed, ForwardCache& cache) {
  namespace k = kernels;
  const auto& c = params.config;
  const std::size_t L = input.length();
  const std::size_t d = c.hidden_dim;
  const std::size_t f = c.ffn_dim;
  if (L == 0 || L > c.max_positions)
    throw LengthError("input length " + std::to_string(L) + " outside 1.." +
                      std::to_string(c.max_positions));
  const bool drop = mode == Mode::train && c.dropout > 0.0;

  cache.ids = input.ids;
  cache.layers.assign(c.layers, {});

  Matrix h(L, d);
  const auto& tok = params.tensors[0].data;
  const auto& pos = params.tensors[1].data;
  for (std::size_t i = 0; i < L; ++i) {
    const TokenId id = input.ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= c.vocab_size)
      throw IndexError("token id " + std::to_string(id) + " outside the embedding table");
    for (std::size_t j = 0; j < d; ++j)
      h(i, j) = tok[static_cast<std::size_t>(id) * d + j] + pos[i * d + j];
  }
  cache.embed_mask = drop ? dropout_mask(L * d, c.dropout, dropout_seed, 0) : std::vector<double>{};
  apply_mask(h.data, cache.embed_mask);

  for (std::size_t l = 0; l < c.layers; ++l) {
    LayerCache& lc = cache.layers[l];
    lc.input = h;

    lc.qkv = Matrix(L, 3 * d);
    k::linear_forward(h.data, view(params, l, kQkvW), view(params, l, kQkvB), lc.qkv.data, L, d,
                      3 * d);
    lc.probs.assign(c.heads * L * L, 0.0);
    lc.ctx = Matrix(L, d);
    k::attention_forward(lc.qkv.data, lc.probs, lc.ctx.data, L, d, c.heads);
    Matrix attn(L, d);
    k::linear_forward(lc.ctx.data, view(params, l, kOutW), view(params, l, kOutB), attn.data, L,
                      d, d);
    lc.attn_mask = drop ? dropout_mask(L * d, c.dropout, dropout_seed, 4 * l + 1)
                        : std::vector<double>{};
    apply_mask(attn.data, lc.attn_mask);

    lc.res1 = Matrix(L, d);
    for (std::size_t i = 0; i < L * d; ++i) lc.res1.data[i] = h.data[i] + attn.data[i];
    lc.mean1.resize(L);
    lc.rstd1.resize(L);
    lc.h1 = Matrix(L, d);
    k::layernorm_forward(lc.res1.data, view(params, l, kLn1G), view(params, l, kLn1B), lc.h1.data,
                         lc.mean1, lc.rstd1, L, d);

    lc.ffn_pre = Matrix(L, f);
    k::linear_forward(lc.h1.data, view(params, l, kFfnInW), view(params, l, kFfnInB),
                      lc.ffn_pre.data, L, d, f);
    lc.ffn_act = Matrix(L, f);
    k::gelu_forward(lc.ffn_pre.data, lc.ffn_act.data);
    Matrix ffn(L, d);
    k::linear_forward(lc.ffn_act.data, view(params, l, kFfnOutW), view(params, l, kFfnOutB),
                      ffn.data, L, f, d);
    lc.ffn_mask = drop ? dropout_mask(L * d, c.dropout, dropout_seed, 4 * l + 2)
                       : std::vector<double>{};
    apply_mask(ffn.data, lc.ffn_mask);

    lc.res2 = Matrix(L, d);
    for (std::size_t i = 0; i < L * d; ++i) lc.res2.data[i] = lc.h1.data[i] + ffn.data[i];
    lc.mean2.resize(L);
    lc.rstd2.resize(L);
    k::layernorm_forward(lc.res2.data, view(params, l, kLn2G), view(params, l, kLn2B), h.data,
                         lc.mean2, lc.rstd2, L, d);
  }

  for (double v : h.data)
    if (!std::isfinite(v)) throw NonFiniteError("encoder produced a non-finite activation");
  return h;
}

EncodedSequence encode(const EncoderParams& params, const ModelInput& input, Mode mode,
                       std::uint64_t dropout_seed) {
  ForwardCache cache;
  return encode(params, input, mode, dropout_seed, cache);
}

void backward(const EncoderParams& params, const ForwardCache& cache, const Matrix& d_output,
              EncoderParams& grads) {
  namespace k = kernels;
  const auto& c = params.config;
  const std::size_t L = cache.ids.size();
  const std::size_t d = c.hidden_dim;
  const std::size_t f = c.ffn_dim;

  std::vector<double> dh = d_output.data;
  for (std::size_t li = c.layers; li-- > 0;) {
    const LayerCache& lc = cache.layers[li];

    std::vector<double> dres2(L * d, 0.0);
    k::layernorm_backward(lc.res2.data, view(params, li, kLn2G), lc.mean2, lc.rstd2, dh, dres2,
                          grad(grads, li, kLn2G), grad(grads, li, kLn2B), L, d);

    std::vector<double> dffn = dres2;
    apply_mask(dffn, lc.ffn_mask);
    std::vector<double> dact(L * f, 0.0);
    k::linear_backward(lc.ffn_act.data, view(params, li, kFfnOutW), dffn, dact,
                       grad(grads, li, kFfnOutW), grad(grads, li, kFfnOutB), L, f, d);
    std::vector<double> dpre(L * f, 0.0);
    k::gelu_backward(lc.ffn_pre.data, dact, dpre);
    std::vector<double> dh1 = dres2;
    k::linear_backward(lc.h1.data, view(params, li, kFfnInW), dpre, dh1,
                       grad(grads, li, kFfnInW), grad(grads, li, kFfnInB), L, d, f);

    std::vector<double> dres1(L * d, 0.0);
    k::layernorm_backward(lc.res1.data, view(params, li, kLn1G), lc.mean1, lc.rstd1, dh1, dres1,
                          grad(grads, li, kLn1G), grad(grads, li, kLn1B), L, d);

    std::vector<double> dattn = dres1;
    apply_mask(dattn, lc.attn_mask);
    std::vector<double> dctx(L * d, 0.0);
    k::linear_backward(lc.ctx.data, view(params, li, kOutW), dattn, dctx, grad(grads, li, kOutW),
                       grad(grads, li, kOutB), L, d, d);
    std::vector<double> dqkv(L * 3 * d, 0.0);
    k::attention_backward(lc.qkv.data, lc.probs, dctx, dqkv, L, d, c.heads);
    dh = dres1;
    k::linear_backward(lc.input.data, view(params, li, kQkvW), dqkv, dh, grad(grads, li, kQkvW),
                       grad(grads, li, kQkvB), L, d, 3 * d);
  }

  apply_mask(dh, cache.embed_mask);
  auto& dtok = grads.tensors[0].data;
  auto& dpos = grads.tensors[1].data;
  for (std::size_t i = 0; i < L; ++i) {
    const auto id = static_cast<std::size_t>(cache.ids[i]);
    for (std::size_t j = 0; j < d; ++j) {
      dtok[id * d + j] += dh[i * d + j];
      dpos[i * d + j] += dh[i * d + j];
    }
  }
}

GradientResult gradients(const EncoderParams& params, const ModelInput& input,
                         const LossClosure& loss, Mode mode, std::uint64_t dropout_seed) {
  ForwardCache cache;
  const auto out = encode(params, input, mode, dropout_seed, cache);
  Matrix d_out(out.rows, out.cols);
  GradientResult r;
  r.loss = loss(out, d_out);
  if (!std::isfinite(r.loss)) throw NonFiniteGradientError("loss closure returned non-finite");
  r.grads = params.zeros_like();
  backward(params, cache, d_out, r.grads);
  if (!r.grads.all_finite()) throw NonFiniteGradientError("gradient has non-finite entries");
  return r;
}

std::vector<double> hash_vector(TokenId token, std::size_t dim) {
  Rng rng(mix64(0x6861736865ULL ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(token))));
  std::vector<double> v(dim);
  double norm = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

EncodedSequence encode_hash(const ModelInput& input, std::size_t dim) {
  Matrix out(input.length(), dim);
  for (std::size_t i = 0; i < input.length(); ++i) {
    const auto v = hash_vector(input.ids[i], dim);
    std::copy(v.begin(), v.end(), out.row(i).begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'C', 'M', 'C', 'K', 'P', 'T', '0', '1'};

void write_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(v >> (8 * i));
  out.write(b, 8);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw CheckpointError("truncated checkpoint header");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

}  // namespace

void save_checkpoint(const EncoderParams& params, const std::string& path,
                     const nlohmann::json& metadata) {
  nlohmann::json header;
  header["config"] = to_json(params.config);
  header["tensors"] = nlohmann::json::array();
  for (const auto& t : params.tensors) header["tensors"].push_back({{"name", t.name}, {"shape", t.shape}});
  header["dtype"] = "float32-le";
  header["metadata"] = metadata;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint '" + path + "'");
  out.write(kMagic, sizeof kMagic);
  write_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : params.tensors)
    for (double v : t.data) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      char b[4];
      for (int i = 0; i < 4; ++i) b[i] = static_cast<char>(bits >> (8 * i));
      out.write(b, 4);
    }
  if (!out) throw CheckpointError("failed writing checkpoint '" + path + "'");
}

EncoderParams load_checkpoint(const std::string& path, nlohmann::json* metadata) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw CheckpointError("'" + path + "' is not a checkpoint");
  const auto len = read_u64(in);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw CheckpointError("truncated checkpoint header");
  const auto header = nlohmann::json::parse(text);

  EncoderParams p = init_params(encoder_config_from_json(header.at("config")));
  const auto& listed = header.at("tensors");
  if (listed.size() != p.tensors.size()) throw CheckpointError("tensor list does not match config");
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    auto& t = p.tensors[i];
    if (listed[i].at("name").get<std::string>() != t.name ||
        listed[i].at("shape").get<std::vector<std::size_t>>() != t.shape)
      throw CheckpointError("tensor '" + t.name + "' does not match the checkpoint layout");
    for (auto& v : t.data) {
      unsigned char b[4];
      in.read(reinterpret_cast<char*>(b), 4);
      if (!in) throw CheckpointError("truncated tensor data in '" + path + "'");
      std::uint32_t bits = 0;
      for (int k = 3; k >= 0; --k) bits = (bits << 8) | b[k];
      v = static_cast<double>(std::bit_cast<float>(bits));
    }
  }
  if (metadata) *metadata = header.value("metadata", nlohmann::json::object());
  return p;
}

}  // namespace choicematch
