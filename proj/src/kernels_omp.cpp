#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "choicematch/kernels.hpp"

namespace choicematch::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

bool worth_it(std::size_t work) { return work >= kParallelWork; }

}  // namespace

void linear_forward(In x, In w, In b, Out y, std::size_t rows, std::size_t in, std::size_t out) {
  const double* xp = x.data();
  const double* wp = w.data();
  const double* bp = b.data();
  double* yp = y.data();
#pragma omp parallel for schedule(static) if (worth_it(rows * in * out))
  for (std::size_t i = 0; i < rows; ++i) {
    double* yr = yp + i * out;
    for (std::size_t j = 0; j < out; ++j) yr[j] = bp[j];
    for (std::size_t k = 0; k < in; ++k) {
      const double xv = xp[i * in + k];
      const double* wr = wp + k * out;
      for (std::size_t j = 0; j < out; ++j) yr[j] += xv * wr[j];
    }
  }
}

void linear_backward(In x, In w, In dy, Out dx, Out dw, Out db, std::size_t rows,
                     std::size_t in, std::size_t out) {
  const double* xp = x.data();
  const double* wp = w.data();
  const double* gp = dy.data();
  double* dwp = dw.data();
  const bool par = worth_it(rows * in * out);

  if (!dx.empty()) {
    double* dxp = dx.data();
#pragma omp parallel for schedule(static) if (par)
    for (std::size_t i = 0; i < rows; ++i) {
      const double* g = gp + i * out;
      for (std::size_t k = 0; k < in; ++k) {
        const double* wr = wp + k * out;
        double acc = 0.0;
        for (std::size_t j = 0; j < out; ++j) acc += wr[j] * g[j];
        dxp[i * in + k] += acc;
      }
    }
  }

#pragma omp parallel for schedule(static) if (par)
  for (std::size_t k = 0; k < in; ++k) {
    double* dwr = dwp + k * out;
    for (std::size_t i = 0; i < rows; ++i) {
      const double xv = xp[i * in + k];
      const double* g = gp + i * out;
      for (std::size_t j = 0; j < out; ++j) dwr[j] += xv * g[j];
    }
  }

  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < out; ++j) db[j] += gp[i * out + j];
}

void layernorm_forward(In x, In gamma, In beta, Out y, Out mean, Out rstd, std::size_t rows,
                       std::size_t cols) {
  const double n = static_cast<double>(cols);
#pragma omp parallel for schedule(static) if (worth_it(rows * cols * 8))
  for (std::size_t i = 0; i < rows; ++i) {
    const double* xr = x.data() + i * cols;
    double m = 0.0;
    for (std::size_t c = 0; c < cols; ++c) m += xr[c];
    m /= n;
    double v = 0.0;
    for (std::size_t c = 0; c < cols; ++c) v += (xr[c] - m) * (xr[c] - m);
    const double r = 1.0 / std::sqrt(v / n + kLayerNormEps);
    mean[i] = m;
    rstd[i] = r;
    double* yr = y.data() + i * cols;
    for (std::size_t c = 0; c < cols; ++c) yr[c] = gamma[c] * ((xr[c] - m) * r) + beta[c];
  }
}

void layernorm_backward(In x, In gamma, In mean, In rstd, In dy, Out dx, Out dgamma, Out dbeta,
                        std::size_t rows, std::size_t cols) {
  const double n = static_cast<double>(cols);
  // Parameter gradients reduce over rows; keep them serial and ordered.
  for (std::size_t i = 0; i < rows; ++i) {
    const double* xr = x.data() + i * cols;
    const double* g = dy.data() + i * cols;
    for (std::size_t c = 0; c < cols; ++c) {
      dgamma[c] += g[c] * ((xr[c] - mean[i]) * rstd[i]);
      dbeta[c] += g[c];
    }
  }
#pragma omp parallel for schedule(static) if (worth_it(rows * cols * 8))
  for (std::size_t i = 0; i < rows; ++i) {
    const double* xr = x.data() + i * cols;
    const double* g = dy.data() + i * cols;
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double xhat = (xr[c] - mean[i]) * rstd[i];
      const double gg = g[c] * gamma[c];
      sum_g += gg;
      sum_gx += gg * xhat;
    }
    double* dxr = dx.data() + i * cols;
    for (std::size_t c = 0; c < cols; ++c) {
      const double xhat = (xr[c] - mean[i]) * rstd[i];
      dxr[c] += rstd[i] * (g[c] * gamma[c] - sum_g / n - xhat * sum_gx / n);
    }
  }
}

void attention_forward(In qkv, Out probs, Out ctx, std::size_t rows, std::size_t dim,
                       std::size_t heads) {
  const std::size_t hd = dim / heads;
  const std::size_t stride = 3 * dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const double* base = qkv.data();
  const std::size_t tasks = heads * rows;
#pragma omp parallel for schedule(static) if (worth_it(rows * rows * dim * 2))
  for (std::size_t t = 0; t < tasks; ++t) {
    const std::size_t h = t / rows;
    const std::size_t i = t % rows;
    const double* q = base + i * stride + h * hd;
    double* p = probs.data() + (h * rows + i) * rows;
    double mx = -INFINITY;
    for (std::size_t j = 0; j < rows; ++j) {
      const double* k = base + j * stride + dim + h * hd;
      double s = 0.0;
      for (std::size_t c = 0; c < hd; ++c) s += q[c] * k[c];
      p[j] = s * scale;
      mx = std::max(mx, p[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < rows; ++j) {
      p[j] = std::exp(p[j] - mx);
      z += p[j];
    }
    const double inv = 1.0 / z;
    double* out = ctx.data() + i * dim + h * hd;
    for (std::size_t c = 0; c < hd; ++c) out[c] = 0.0;
    for (std::size_t j = 0; j < rows; ++j) {
      p[j] *= inv;
      const double* v = base + j * stride + 2 * dim + h * hd;
      for (std::size_t c = 0; c < hd; ++c) out[c] += p[j] * v[c];
    }
  }
}

void attention_backward(In qkv, In probs, In dctx, Out dqkv, std::size_t rows, std::size_t dim,
                        std::size_t heads) {
  const std::size_t hd = dim / heads;
  const std::size_t stride = 3 * dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const double* base = qkv.data();
  double* dbase = dqkv.data();
  // Heads touch disjoint column blocks of dqkv, so they can run in parallel.
#pragma omp parallel for schedule(static) if (worth_it(rows * rows * dim * 4))
  for (std::size_t h = 0; h < heads; ++h) {
    std::vector<double> ds(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      const double* p = probs.data() + (h * rows + i) * rows;
      const double* g = dctx.data() + i * dim + h * hd;
      double dot = 0.0;
      for (std::size_t j = 0; j < rows; ++j) {
        const double* v = base + j * stride + 2 * dim + h * hd;
        double* dv = dbase + j * stride + 2 * dim + h * hd;
        double acc = 0.0;
        for (std::size_t c = 0; c < hd; ++c) {
          acc += g[c] * v[c];
          dv[c] += p[j] * g[c];
        }
        ds[j] = acc;
        dot += p[j] * acc;
      }
      const double* q = base + i * stride + h * hd;
      double* dq = dbase + i * stride + h * hd;
      for (std::size_t j = 0; j < rows; ++j) {
        const double s = p[j] * (ds[j] - dot) * scale;
        const double* k = base + j * stride + dim + h * hd;
        double* dk = dbase + j * stride + dim + h * hd;
        for (std::size_t c = 0; c < hd; ++c) {
          dq[c] += s * k[c];
          dk[c] += s * q[c];
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
  const std::size_t n = x.size();
#pragma omp parallel for schedule(static) if (worth_it(n * 16))
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x[i];
    y[i] = 0.5 * v * (1.0 + std::tanh(kGeluK * (v + kGeluC * v * v * v)));
  }
}

void gelu_backward(In x, In dy, Out dx) {
  const std::size_t n = x.size();
#pragma omp parallel for schedule(static) if (worth_it(n * 16))
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x[i];
    const double t = std::tanh(kGeluK * (v + kGeluC * v * v * v));
    dx[i] += dy[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kGeluK * (1.0 + 3.0 * kGeluC * v * v));
  }
}

}  // namespace choicematch::kernels
