// Straightforward serial kernels. These are the readable definitions the
// parallel kernels are tested against; keep them simple.

#include <cmath>
#include <numbers>
#include <vector>

#include "choicematch/kernels.hpp"

namespace choicematch::kernels::reference {

void linear_forward(In x, In w, In b, Out y, std::size_t rows, std::size_t in, std::size_t out) {
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < out; ++j) {
      double acc = b[j];
      for (std::size_t k = 0; k < in; ++k) acc += x[i * in + k] * w[k * out + j];
      y[i * out + j] = acc;
    }
}

void linear_backward(In x, In w, In dy, Out dx, Out dw, Out db, std::size_t rows,
                     std::size_t in, std::size_t out) {
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < out; ++j) {
      const double g = dy[i * out + j];
      db[j] += g;
      for (std::size_t k = 0; k < in; ++k) {
        dw[k * out + j] += x[i * in + k] * g;
        if (!dx.empty()) dx[i * in + k] += w[k * out + j] * g;
      }
    }
}

void layernorm_forward(In x, In gamma, In beta, Out y, Out mean, Out rstd, std::size_t rows,
                       std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    double m = 0.0;
    for (std::size_t c = 0; c < cols; ++c) m += x[i * cols + c];
    m /= static_cast<double>(cols);
    double v = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = x[i * cols + c] - m;
      v += d * d;
    }
    v /= static_cast<double>(cols);
    const double r = 1.0 / std::sqrt(v + kLayerNormEps);
    mean[i] = m;
    rstd[i] = r;
    for (std::size_t c = 0; c < cols; ++c)
      y[i * cols + c] = gamma[c] * (x[i * cols + c] - m) * r + beta[c];
  }
}

void layernorm_backward(In x, In gamma, In mean, In rstd, In dy, Out dx, Out dgamma, Out dbeta,
                        std::size_t rows, std::size_t cols) {
  const double n = static_cast<double>(cols);
  for (std::size_t i = 0; i < rows; ++i) {
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double xhat = (x[i * cols + c] - mean[i]) * rstd[i];
      const double g = dy[i * cols + c] * gamma[c];
      dgamma[c] += dy[i * cols + c] * xhat;
      dbeta[c] += dy[i * cols + c];
      sum_g += g;
      sum_gx += g * xhat;
    }
    for (std::size_t c = 0; c < cols; ++c) {
      const double xhat = (x[i * cols + c] - mean[i]) * rstd[i];
      const double g = dy[i * cols + c] * gamma[c];
      dx[i * cols + c] += rstd[i] * (g - sum_g / n - xhat * sum_gx / n);
    }
  }
}

void attention_forward(In qkv, Out probs, Out ctx, std::size_t rows, std::size_t dim,
                       std::size_t heads) {
  const std::size_t hd = dim / heads;
  const std::size_t stride = 3 * dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < rows; ++i) {
      double* p = probs.data() + (h * rows + i) * rows;
      double mx = -INFINITY;
      for (std::size_t j = 0; j < rows; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < hd; ++c)
          s += qkv[i * stride + h * hd + c] * qkv[j * stride + dim + h * hd + c];
        p[j] = s * scale;
        mx = std::max(mx, p[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < rows; ++j) {
        p[j] = std::exp(p[j] - mx);
        z += p[j];
      }
      for (std::size_t j = 0; j < rows; ++j) p[j] /= z;
      for (std::size_t c = 0; c < hd; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < rows; ++j) acc += p[j] * qkv[j * stride + 2 * dim + h * hd + c];
        ctx[i * dim + h * hd + c] = acc;
      }
    }
  }
}

void attention_backward(In qkv, In probs, In dctx, Out dqkv, std::size_t rows, std::size_t dim,
                        std::size_t heads) {
  const std::size_t hd = dim / heads;
  const std::size_t stride = 3 * dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<double> dp(rows);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < rows; ++i) {
      const double* p = probs.data() + (h * rows + i) * rows;
      double dot = 0.0;
      for (std::size_t j = 0; j < rows; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < hd; ++c) {
          const double g = dctx[i * dim + h * hd + c];
          acc += g * qkv[j * stride + 2 * dim + h * hd + c];
          dqkv[j * stride + 2 * dim + h * hd + c] += p[j] * g;
        }
        dp[j] = acc;
        dot += p[j] * acc;
      }
      for (std::size_t j = 0; j < rows; ++j) {
        const double ds = p[j] * (dp[j] - dot) * scale;
        for (std::size_t c = 0; c < hd; ++c) {
          dqkv[i * stride + h * hd + c] += ds * qkv[j * stride + dim + h * hd + c];
          dqkv[j * stride + dim + h * hd + c] += ds * qkv[i * stride + h * hd + c];
        }
      }
    }
  }
}

namespace {
constexpr double kGeluC = 0.044715;
const double kGeluK = std::sqrt(2.0 / std::numbers::pi);
}  // namespace

void gelu_forward(In x, Out y) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    y[i] = 0.5 * v * (1.0 + std::tanh(kGeluK * (v + kGeluC * v * v * v)));
  }
}

void gelu_backward(In x, In dy, Out dx) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    const double t = std::tanh(kGeluK * (v + kGeluC * v * v * v));
    const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kGeluK * (1.0 + 3.0 * kGeluC * v * v);
    dx[i] += dy[i] * d;
  }
}

}  // namespace choicematch::kernels::reference
