#pragma once

// Dense kernels used by the encoder. Every kernel exists twice: the
// OpenMP-parallel version the encoder calls, and a plain serial version in
// `kernels::reference` kept for testing and benchmarking. Both take
// row-major buffers; shapes are given explicitly.
//
// Backward kernels accumulate into their gradient outputs (+=) so that
// gradients of shared inputs can be summed across call sites.

#include <cstddef>
#include <span>

namespace choicematch::kernels {

using In = std::span<const double>;
using Out = std::span<double>;

/// y[rows, out] = x[rows, in] * w[in, out] + b[out]
void linear_forward(In x, In w, In b, Out y, std::size_t rows, std::size_t in, std::size_t out);

/// dx += dy * w^T, dw += x^T * dy, db += colsum(dy). dx may be empty.
void linear_backward(In x, In w, In dy, Out dx, Out dw, Out db, std::size_t rows,
                     std::size_t in, std::size_t out);

/// Per-row normalization; writes mean and reciprocal std per row.
void layernorm_forward(In x, In gamma, In beta, Out y, Out mean, Out rstd, std::size_t rows,
                       std::size_t cols);

void layernorm_backward(In x, In gamma, In mean, In rstd, In dy, Out dx, Out dgamma, Out dbeta,
                        std::size_t rows, std::size_t cols);

/// Bidirectional multi-head attention on packed qkv[rows, 3*dim].
/// probs is [heads, rows, rows]; ctx is [rows, dim].
void attention_forward(In qkv, Out probs, Out ctx, std::size_t rows, std::size_t dim,
                       std::size_t heads);

void attention_backward(In qkv, In probs, In dctx, Out dqkv, std::size_t rows, std::size_t dim,
                        std::size_t heads);

/// tanh-approximated GELU.
void gelu_forward(In x, Out y);
void gelu_backward(In x, In dy, Out dx);

namespace reference {

void linear_forward(In x, In w, In b, Out y, std::size_t rows, std::size_t in, std::size_t out);
void linear_backward(In x, In w, In dy, Out dx, Out dw, Out db, std::size_t rows,
                     std::size_t in, std::size_t out);
void layernorm_forward(In x, In gamma, In beta, Out y, Out mean, Out rstd, std::size_t rows,
                       std::size_t cols);
void layernorm_backward(In x, In gamma, In mean, In rstd, In dy, Out dx, Out dgamma, Out dbeta,
                        std::size_t rows, std::size_t cols);
void attention_forward(In qkv, Out probs, Out ctx, std::size_t rows, std::size_t dim,
                       std::size_t heads);
void attention_backward(In qkv, In probs, In dctx, Out dqkv, std::size_t rows, std::size_t dim,
                        std::size_t heads);
void gelu_forward(In x, Out y);
void gelu_backward(In x, In dy, Out dx);

}  // namespace reference

inline constexpr double kLayerNormEps = 1e-5;

}  // namespace choicematch::kernels
