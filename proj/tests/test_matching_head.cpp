#include <algorithm>
#include <cmath>
#include <numeric>

#include "choicematch/errors.hpp"
#include "choicematch/matching_head.hpp"
#include "choicematch/random.hpp"
#include "doctest.h"

using namespace choicematch;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (auto& x : m.data) x = rng.uniform(-2.0, 2.0);
  return m;
}

Vector random_vector(std::size_t n, Rng& rng, double lo = 0.0, double hi = 10.0) {
  Vector v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace

TEST_CASE("representations gather rows") {
  Rng rng(1);
  Matrix m(9, 2);
  for (std::size_t i = 0; i < 9; ++i) m(i, 0) = m(i, 1) = static_cast<double>(i);
  const std::size_t pos[] = {1, 4, 7};
  const auto reps = relation_representations(m, pos);
  REQUIRE(reps.size() == 3);
  CHECK(reps[0] == Vector{1, 1});
  CHECK(reps[2] == Vector{7, 7});
  CHECK(relation_representations(m, std::vector<std::size_t>{3}).size() == 1);

  Matrix two(2, 2);
  two(0, 0) = two(0, 1) = 1;
  two(1, 0) = two(1, 1) = 3;
  CHECK(instance_representation(two, 0, 1) == Vector{2, 2});
  CHECK(instance_representation(two, 1, 1) == Vector{3, 3});

  for (int t = 0; t < 100; ++t) {
    const auto enc = random_matrix(12, 5, rng);
    std::vector<std::size_t> p{rng.below(12), rng.below(12), rng.below(12)};
    const auto r = relation_representations(enc, p);
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t j = 0; j < 5; ++j) CHECK(r[k][j] == enc.data[p[k] * 5 + j]);
    const std::size_t a = rng.below(12), b = rng.below(12);
    const auto x = instance_representation(enc, a, b);
    for (std::size_t j = 0; j < 5; ++j) CHECK(x[j] == doctest::Approx((enc(a, j) + enc(b, j)) / 2).epsilon(1e-15));
  }
  CHECK_THROWS_AS(relation_representations(m, std::vector<std::size_t>{9}), IndexError);
}

TEST_CASE("distance examples and oracle") {
  CHECK(match(Vector{0, 0}, {{3, 4}})[0] == 5.0);
  CHECK(match(Vector{1, 2}, {{1, 2}})[0] == 0.0);
  CHECK_THROWS_AS(match(Vector{1, 2}, {{1, 2, 3}}), DimensionMismatchError);
  Rng rng(2);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t dim = 1 + rng.below(64);
    const auto x = random_vector(dim, rng, -3, 3);
    std::vector<Vector> rels;
    for (std::size_t k = 0, n = 1 + rng.below(8); k < n; ++k) rels.push_back(random_vector(dim, rng, -3, 3));
    const auto d = match(x, rels);
    for (std::size_t k = 0; k < rels.size(); ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < dim; ++j) s += (x[j] - rels[k][j]) * (x[j] - rels[k][j]);
      CHECK(std::abs(d[k] - std::sqrt(s)) <= 1e-9);
    }
  }
}

TEST_CASE("probabilities") {
  const auto p = probabilities(Vector{1.0, 2.0});
  CHECK(p[0] == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(p[1] == doctest::Approx(0.2689).epsilon(1e-4));
  const auto u = probabilities(Vector(7, 3.5));
  for (double x : u) CHECK(x == doctest::Approx(1.0 / 7));
  const auto a = probabilities(Vector{5.0, 5.7, 6.1});
  const auto b = probabilities(Vector{0.0, 0.7, 1.1});
  for (int i = 0; i < 3; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  CHECK_THROWS_AS(probabilities(Vector{}), EmptyError);

  Rng rng(3);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 1 + rng.below(512);
    const auto d = random_vector(n, rng, 0.0, 1000.0);
    const auto q = probabilities(d);
    CHECK(std::abs(std::accumulate(q.begin(), q.end(), 0.0) - 1.0) <= 1e-6);
    for (std::size_t i = 1; i < n; ++i) {
      if (d[i - 1] < d[i]) CHECK(q[i - 1] >= q[i]);
      if (d[i - 1] > d[i]) CHECK(q[i - 1] <= q[i]);
    }
  }
}

TEST_CASE("prediction") {
  CHECK(predict(Vector{0.2, 0.5, 0.3}) == 1);
  CHECK(predict(Vector{0.25, 0.25, 0.25, 0.25}) == 0);
  Rng rng(4);
  for (int t = 0; t < 1000; ++t) {
    const auto d = random_vector(1 + rng.below(10), rng);
    const auto argmin = static_cast<std::size_t>(std::min_element(d.begin(), d.end()) - d.begin());
    CHECK(predict(probabilities(d)) == argmin);
    Vector shifted = d, squashed = d;
    for (auto& x : shifted) x += 17.0;
    for (auto& x : squashed) x = std::log1p(x);
    CHECK(predict(probabilities(shifted)) == argmin);
    CHECK(static_cast<std::size_t>(std::min_element(squashed.begin(), squashed.end()) - squashed.begin()) == argmin);
  }
}

TEST_CASE("loss") {
  CHECK(loss(Vector{1.0}, 0) == 0.0);
  CHECK(loss(Vector{0.5, 0.5}, 1) == doctest::Approx(0.6931).epsilon(1e-4));
  CHECK_THROWS_AS(loss(Vector{0.5, 0.5}, 2), IndexError);
  Rng rng(5);
  for (int t = 0; t < 500; ++t) {
    const auto p = probabilities(random_vector(1 + rng.below(9), rng));
    const std::size_t gold = rng.below(p.size());
    double oracle = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) oracle -= (i == gold ? 1.0 : 0.0) * std::log(p[i]);
    CHECK(loss(p, gold) == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(loss(p, gold) >= 0.0);
  }
  CHECK(loss(probabilities(Vector(6, 1.0)), 3) == doctest::Approx(std::log(6.0)));
}

TEST_CASE("score and analytic gradient with respect to the encoder output") {
  Rng rng(6);
  ModelInput in;
  in.ids.assign(14, kUnk);
  in.choice_positions = {1, 3, 5};
  in.e1_open = 8;
  in.e1_close = 10;
  in.e2_open = 11;
  in.e2_close = 13;
  for (auto pooling : {InstancePooling::opening_markers, InstancePooling::all_markers}) {
    const auto enc = random_matrix(14, 6, rng);
    const auto r = score(enc, in, 2, pooling);
    REQUIRE(r.loss);
    Matrix d(14, 6);
    CHECK(loss_and_gradient(enc, in, 2, d, pooling) == doctest::Approx(*r.loss).epsilon(1e-12));
    for (std::size_t i = 0; i < enc.data.size(); ++i) {
      Matrix a = enc, b = enc;
      a.data[i] += 1e-6;
      b.data[i] -= 1e-6;
      const double fd = (*score(a, in, 2, pooling).loss - *score(b, in, 2, pooling).loss) / 2e-6;
      CHECK(d.data[i] == doctest::Approx(fd).epsilon(1e-5).scale(1e-6));
    }
  }
}

TEST_CASE("match result JSON round trip") {
  MatchResult r{{1.0, 2.5}, probabilities(Vector{1.0, 2.5}), 0, 0.2};
  const auto back = match_result_from_json(to_json(r));
  CHECK(back.distances == r.distances);
  CHECK(back.probabilities == r.probabilities);
  CHECK(back.predicted == 0);
  CHECK(back.loss == r.loss);
  MatchResult no_loss{{1.0}, {1.0}, 0, std::nullopt};
  CHECK(!match_result_from_json(to_json(no_loss)).loss);
}
