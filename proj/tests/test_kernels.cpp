#include <cmath>
#include <vector>

#include "choicematch/kernels.hpp"
#include "choicematch/random.hpp"
#include "doctest.h"

using namespace choicematch;
namespace k = choicematch::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

void check_close(const std::vector<double>& a, const std::vector<double>& b, double tol = 1e-12) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  CHECK(worst <= tol);
}

}  // namespace

TEST_CASE("parallel kernels agree with the serial reference") {
  Rng rng(5);
  struct Shape {
    std::size_t rows, in, out, heads;
  };
  for (const Shape s : {Shape{1, 4, 4, 1}, Shape{7, 8, 12, 2}, Shape{33, 16, 32, 4}, Shape{80, 64, 64, 4}}) {
    const auto [rows, in, out, heads] = s;
    const auto x = random_vec(rows * in, rng);
    const auto w = random_vec(in * out, rng);
    const auto b = random_vec(out, rng);
    const auto dy = random_vec(rows * out, rng);

    std::vector<double> y1(rows * out), y2(rows * out);
    k::linear_forward(x, w, b, y1, rows, in, out);
    k::reference::linear_forward(x, w, b, y2, rows, in, out);
    check_close(y1, y2);

    std::vector<double> dx1(rows * in, 0.5), dx2(rows * in, 0.5), dw1(in * out), dw2(in * out), db1(out), db2(out);
    k::linear_backward(x, w, dy, dx1, dw1, db1, rows, in, out);
    k::reference::linear_backward(x, w, dy, dx2, dw2, db2, rows, in, out);
    check_close(dx1, dx2);
    check_close(dw1, dw2);
    check_close(db1, db2);

    const auto g = random_vec(in, rng), be = random_vec(in, rng), dln = random_vec(rows * in, rng);
    std::vector<double> ln1(rows * in), ln2(rows * in), m1(rows), m2(rows), r1(rows), r2(rows);
    k::layernorm_forward(x, g, be, ln1, m1, r1, rows, in);
    k::reference::layernorm_forward(x, g, be, ln2, m2, r2, rows, in);
    check_close(ln1, ln2);
    check_close(r1, r2);
    std::vector<double> lx1(rows * in), lx2(rows * in), lg1(in), lg2(in), lb1(in), lb2(in);
    k::layernorm_backward(x, g, m1, r1, dln, lx1, lg1, lb1, rows, in);
    k::reference::layernorm_backward(x, g, m2, r2, dln, lx2, lg2, lb2, rows, in);
    check_close(lx1, lx2);
    check_close(lg1, lg2);
    check_close(lb1, lb2);

    const std::size_t dim = in;
    const auto qkv = random_vec(rows * 3 * dim, rng);
    const auto dctx = random_vec(rows * dim, rng);
    std::vector<double> p1(heads * rows * rows), p2(heads * rows * rows), c1(rows * dim), c2(rows * dim);
    k::attention_forward(qkv, p1, c1, rows, dim, heads);
    k::reference::attention_forward(qkv, p2, c2, rows, dim, heads);
    check_close(p1, p2);
    check_close(c1, c2);
    std::vector<double> dq1(rows * 3 * dim), dq2(rows * 3 * dim);
    k::attention_backward(qkv, p1, dctx, dq1, rows, dim, heads);
    k::reference::attention_backward(qkv, p2, dctx, dq2, rows, dim, heads);
    check_close(dq1, dq2);

    std::vector<double> ge1(x.size()), ge2(x.size()), gd1(x.size()), gd2(x.size());
    k::gelu_forward(x, ge1);
    k::reference::gelu_forward(x, ge2);
    check_close(ge1, ge2);
    k::gelu_backward(x, dln, gd1);
    k::reference::gelu_backward(x, dln, gd2);
    check_close(gd1, gd2);
  }
}

TEST_CASE("reference kernels match direct formulas") {
  // 1x2 * 2x1 + b
  std::vector<double> y(1);
  k::reference::linear_forward(std::vector<double>{1, 2}, std::vector<double>{3, 4}, std::vector<double>{0.5}, y, 1, 2, 1);
  CHECK(y[0] == doctest::Approx(11.5));

  // Attention rows are probability distributions.
  Rng rng(2);
  const std::size_t rows = 5, dim = 4, heads = 2;
  const auto qkv = random_vec(rows * 3 * dim, rng);
  std::vector<double> probs(heads * rows * rows), ctx(rows * dim);
  k::reference::attention_forward(qkv, probs, ctx, rows, dim, heads);
  for (std::size_t r = 0; r < heads * rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < rows; ++c) s += probs[r * rows + c];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }

  // GELU(0) = 0, GELU(x) ~ x for large x.
  std::vector<double> g(2);
  k::reference::gelu_forward(std::vector<double>{0.0, 10.0}, g);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == doctest::Approx(10.0));

  // Layer norm output has zero mean and unit variance (up to eps).
  const std::vector<double> x{1, 2, 3, 4};
  std::vector<double> out(4), mean(1), rstd(1);
  k::reference::layernorm_forward(x, std::vector<double>(4, 1.0), std::vector<double>(4, 0.0), out, mean, rstd, 1, 4);
  CHECK(mean[0] == 2.5);
  double var = 0.0;
  for (double v : out) var += v * v / 4.0;
  CHECK(var == doctest::Approx(1.25 / (1.25 + k::kLayerNormEps)));
}
