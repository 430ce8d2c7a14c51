#pragma once

#include <optional>
#include <span>
#include <vector>

#include "choicematch/encoder.hpp"
#include "choicematch/prompt_codec.hpp"
#include "json.hpp"

namespace choicematch {

using Vector = std::vector<double>;

/// Which marker states are averaged into the instance representation.
enum class InstancePooling {
  opening_markers,  // ([e1] + [e2]) / 2
  all_markers,      // ([e1] + [/e1] + [e2] + [/e2]) / 4
};

struct MatchResult {
  Vector distances;
  Vector probabilities;
  std::size_t predicted = 0;
  std::optional<double> loss;
};

nlohmann::json to_json(const MatchResult& r);
MatchResult match_result_from_json(const nlohmann::json& j);

/// Rows of `enc` at the [C] positions, in order.
std::vector<Vector> relation_representations(const EncodedSequence& enc,
                                             std::span<const std::size_t> positions);

/// (row(e1_open) + row(e2_open)) / 2.
Vector instance_representation(const EncodedSequence& enc, std::size_t e1_open,
                               std::size_t e2_open);

/// Euclidean distance from `x` to each relation vector.
Vector match(std::span<const double> x, const std::vector<Vector>& rels);

/// softmax(-distances), max-shifted.
Vector probabilities(std::span<const double> distances);

/// Index of the largest probability; ties go to the lowest index.
std::size_t predict(std::span<const double> probs);

/// -log probs[gold].
double loss(std::span<const double> probs, std::size_t gold);

/// Runs the whole head on an encoded input.
MatchResult score(const EncodedSequence& enc, const ModelInput& input,
                  std::optional<std::size_t> gold = std::nullopt,
                  InstancePooling pooling = InstancePooling::opening_markers);

/// Loss for `gold` and its gradient with respect to the encoder output
/// (written into d_output, which must be sized like enc).
double loss_and_gradient(const EncodedSequence& enc, const ModelInput& input, std::size_t gold,
                         Matrix& d_output,
                         InstancePooling pooling = InstancePooling::opening_markers);

}  // namespace choicematch
