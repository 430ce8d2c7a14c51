// Serial reference kernels vs. the OpenMP kernels the encoder uses.
#include <benchmark/benchmark.h>

#include <vector>

#include "choicematch/encoder.hpp"
#include "choicematch/kernels.hpp"
#include "choicematch/random.hpp"

namespace k = choicematch::kernels;

namespace {

std::vector<double> filled(std::size_t n, std::uint64_t seed) {
  choicematch::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

template <bool Parallel>
void BM_Linear(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 64;
  const auto x = filled(rows * d, 1), w = filled(d * 4 * d, 2), b = filled(4 * d, 3);
  std::vector<double> y(rows * 4 * d);
  for (auto _ : state) {
    if constexpr (Parallel) k::linear_forward(x, w, b, y, rows, d, 4 * d);
    else k::reference::linear_forward(x, w, b, y, rows, d, 4 * d);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows * d * 4 * d));
}

template <bool Parallel>
void BM_Attention(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 64, heads = 4;
  const auto qkv = filled(rows * 3 * d, 4);
  std::vector<double> probs(heads * rows * rows), ctx(rows * d), dqkv(rows * 3 * d);
  const auto dctx = filled(rows * d, 5);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::attention_forward(qkv, probs, ctx, rows, d, heads);
      k::attention_backward(qkv, probs, dctx, dqkv, rows, d, heads);
    } else {
      k::reference::attention_forward(qkv, probs, ctx, rows, d, heads);
      k::reference::attention_backward(qkv, probs, dctx, dqkv, rows, d, heads);
    }
    benchmark::DoNotOptimize(dqkv.data());
  }
}

template <bool Parallel>
void BM_LayerNorm(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 64;
  const auto x = filled(rows * d, 6), g = filled(d, 7), b = filled(d, 8), dy = filled(rows * d, 9);
  std::vector<double> y(rows * d), mean(rows), rstd(rows), dx(rows * d), dg(d), db(d);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::layernorm_forward(x, g, b, y, mean, rstd, rows, d);
      k::layernorm_backward(x, g, mean, rstd, dy, dx, dg, db, rows, d);
    } else {
      k::reference::layernorm_forward(x, g, b, y, mean, rstd, rows, d);
      k::reference::layernorm_backward(x, g, mean, rstd, dy, dx, dg, db, rows, d);
    }
    benchmark::DoNotOptimize(dx.data());
  }
}

void BM_EncodeTiny(benchmark::State& state) {
  choicematch::EncoderConfig c;
  c.vocab_size = 500;
  const auto params = choicematch::init_params(c);
  choicematch::ModelInput in;
  choicematch::Rng rng(10);
  for (int i = 0; i < state.range(0); ++i) in.ids.push_back(static_cast<choicematch::TokenId>(rng.below(500)));
  for (auto _ : state) benchmark::DoNotOptimize(choicematch::encode(params, in, choicematch::Mode::eval));
}

}  // namespace

BENCHMARK(BM_Linear<false>)->Name("linear/reference")->Arg(32)->Arg(128);
BENCHMARK(BM_Linear<true>)->Name("linear/openmp")->Arg(32)->Arg(128);
BENCHMARK(BM_Attention<false>)->Name("attention/reference")->Arg(32)->Arg(128);
BENCHMARK(BM_Attention<true>)->Name("attention/openmp")->Arg(32)->Arg(128);
BENCHMARK(BM_LayerNorm<false>)->Name("layernorm/reference")->Arg(32)->Arg(128);
BENCHMARK(BM_LayerNorm<true>)->Name("layernorm/openmp")->Arg(32)->Arg(128);
BENCHMARK(BM_EncodeTiny)->Name("encode/tiny")->Arg(40)->Arg(120);

BENCHMARK_MAIN();
