#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "choicematch/relation_core.hpp"
#include "choicematch/training.hpp"
#include "json.hpp"

namespace choicematch {

struct Aggregate {
  double mean = 0.0;
  double ci = 0.0;   // half-width of the 95% normal-approximation interval
  double std = 0.0;  // sample standard deviation (n - 1)
  bool degenerate = false;  // fewer than two values: std and ci reported as 0
};

/// mean, std = sqrt(sum (a - mean)^2 / (T - 1)), ci = 1.96 * std / sqrt(T).
/// Throws EmptyError on an empty list.
Aggregate aggregate(const std::vector<double>& accuracies);

struct EpisodeOutcome {
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  std::vector<MatchResult> predictions;
  std::vector<std::size_t> gold;
};

struct SuiteResult {
  std::size_t way = 0;
  std::size_t shot = 0;
  std::size_t queries = 0;
  double nota_rate = 0.0;
  std::vector<EpisodeOutcome> episodes;
  Aggregate summary;
  double runtime_seconds = 0.0;

  std::vector<double> accuracies() const;
};

/// Correct predictions over queries.
double episode_accuracy(const std::vector<MatchResult>& predictions,
                        const std::vector<std::size_t>& gold);

/// Runs every episode through adapt_and_predict on a private copy of the
/// model; adaptation only happens for episodes with support instances.
/// `workers` bounds the number of episodes in flight (0 = OpenMP default).
SuiteResult evaluate(const Model& model, const std::vector<Episode>& episodes,
                     const AdaptConfig& adapt, std::size_t workers = 0);

/// `count` episodes of `spec` from `split`; episode i uses hash_combine(seed, i).
std::vector<Episode> sample_suite(const LabeledCorpus& corpus, Split split, const EpisodeSpec& spec,
                                  std::size_t count, std::uint64_t seed);

inline constexpr const char* kCiFormula = "ci95=1.96*std/sqrt(T)";

/// Results document: setting, mean, ci, std, formula, ci_method, per_episode.
/// Runtime is deliberately left out so equal runs give equal bytes.
nlohmann::ordered_json results_json(const SuiteResult& r);

/// One-row table: N,K,nota_rate,T,acc,ci,std.
void write_results_csv(const std::vector<SuiteResult>& rows, std::ostream& out);

}  // namespace choicematch
