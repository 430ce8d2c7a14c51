#include "choicematch/matching_head.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "choicematch/errors.hpp"

namespace choicematch {

namespace {

void check_row(const EncodedSequence& enc, std::size_t r) {
  if (r >= enc.rows)
    throw IndexError("row " + std::to_string(r) + " outside an encoding of " +
                     std::to_string(enc.rows) + " rows");
}

std::vector<std::size_t> pooled_rows(const ModelInput& in, InstancePooling pooling) {
  if (pooling == InstancePooling::all_markers)
    return {in.e1_open, in.e1_close, in.e2_open, in.e2_close};
  return {in.e1_open, in.e2_open};
}

Vector pool(const EncodedSequence& enc, const std::vector<std::size_t>& rows) {
  Vector x(enc.cols, 0.0);
  for (auto r : rows) {
    check_row(enc, r);
    for (std::size_t j = 0; j < enc.cols; ++j) x[j] += enc(r, j);
  }
  for (auto& v : x) v /= static_cast<double>(rows.size());
  return x;
}

}  // namespace

nlohmann::json to_json(const MatchResult& r) {
  nlohmann::json j{{"distances", r.distances},
                   {"probabilities", r.probabilities},
                   {"predicted", r.predicted}};
  j["loss"] = r.loss ? nlohmann::json(*r.loss) : nlohmann::json(nullptr);
  return j;
}

MatchResult match_result_from_json(const nlohmann::json& j) {
  MatchResult r;
  r.distances = j.at("distances").get<Vector>();
  r.probabilities = j.at("probabilities").get<Vector>();
  r.predicted = j.at("predicted").get<std::size_t>();
  if (j.contains("loss") && !j["loss"].is_null()) r.loss = j["loss"].get<double>();
  return r;
}

std::vector<Vector> relation_representations(const EncodedSequence& enc,
                                             std::span<const std::size_t> positions) {
  std::vector<Vector> out;
  out.reserve(positions.size());
  for (auto p : positions) {
    check_row(enc, p);
    const auto row = enc.row(p);
    out.emplace_back(row.begin(), row.end());
  }
  return out;
}

Vector instance_representation(const EncodedSequence& enc, std::size_t e1_open,
                               std::size_t e2_open) {
  check_row(enc, e1_open);
  check_row(enc, e2_open);
  Vector x(enc.cols);
  for (std::size_t j = 0; j < enc.cols; ++j) x[j] = (enc(e1_open, j) + enc(e2_open, j)) / 2.0;
  return x;
}

Vector match(std::span<const double> x, const std::vector<Vector>& rels) {
  Vector d;
  d.reserve(rels.size());
  for (const auto& r : rels) {
    if (r.size() != x.size())
      throw DimensionMismatchError("relation vector has dimension " + std::to_string(r.size()) +
                                   ", instance has " + std::to_string(x.size()));
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) s += (x[j] - r[j]) * (x[j] - r[j]);
    d.push_back(std::sqrt(s));
  }
  return d;
}

Vector probabilities(std::span<const double> distances) {
  if (distances.empty()) throw EmptyError("no distances to normalize");
  double lo = std::numeric_limits<double>::infinity();
  for (double v : distances) {
    if (!std::isfinite(v)) throw NonFiniteError("non-finite distance");
    lo = std::min(lo, v);
  }
  Vector p(distances.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(lo - distances[i]);
    z += p[i];
  }
  for (auto& v : p) v /= z;
  return p;
}

std::size_t predict(std::span<const double> probs) {
  if (probs.empty()) throw EmptyError("cannot predict from an empty probability vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i)
    if (probs[i] > probs[best]) best = i;
  return best;
}

double loss(std::span<const double> probs, std::size_t gold) {
  if (gold >= probs.size())
    throw IndexError("gold index " + std::to_string(gold) + " outside " +
                     std::to_string(probs.size()) + " choices");
  return probs[gold] >= 1.0 ? 0.0 : -std::log(probs[gold]);
}

MatchResult score(const EncodedSequence& enc, const ModelInput& input,
                  std::optional<std::size_t> gold, InstancePooling pooling) {
  const auto x = pool(enc, pooled_rows(input, pooling));
  const auto rels = relation_representations(enc, input.choice_positions);
  MatchResult r;
  r.distances = match(x, rels);
  r.probabilities = probabilities(r.distances);
  r.predicted = predict(r.probabilities);
  if (gold) r.loss = loss(r.probabilities, *gold);
  return r;
}

double loss_and_gradient(const EncodedSequence& enc, const ModelInput& input, std::size_t gold,
                         Matrix& d_output, InstancePooling pooling) {
  const auto rows = pooled_rows(input, pooling);
  const auto x = pool(enc, rows);
  const auto rels = relation_representations(enc, input.choice_positions);
  const auto dist = match(x, rels);
  const auto probs = probabilities(dist);
  if (gold >= probs.size()) throw IndexError("gold index outside the choices");
  // Log-sum-exp form keeps the value finite when P(gold) underflows.
  const double lo = *std::min_element(dist.begin(), dist.end());
  double z = 0.0;
  for (double v : dist) z += std::exp(lo - v);
  const double value = dist[gold] - lo + std::log(z);

  // loss = D_gold + log sum_j exp(-D_j), so dloss/dD_i = [i == gold] - P_i.
  Vector dx(enc.cols, 0.0);
  for (std::size_t i = 0; i < rels.size(); ++i) {
    const double g = (i == gold ? 1.0 : 0.0) - probs[i];
    if (dist[i] <= 0.0 || g == 0.0) continue;
    const double s = g / dist[i];
    for (std::size_t j = 0; j < enc.cols; ++j) {
      const double u = s * (x[j] - rels[i][j]);
      dx[j] += u;
      d_output(input.choice_positions[i], j) -= u;
    }
  }
  const double share = 1.0 / static_cast<double>(rows.size());
  for (auto r : rows)
    for (std::size_t j = 0; j < enc.cols; ++j) d_output(r, j) += share * dx[j];
  return value;
}

}  // namespace choicematch
