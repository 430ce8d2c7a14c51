#include "choicematch/eval_harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <ostream>

#include <omp.h>

#include "choicematch/errors.hpp"
#include "choicematch/random.hpp"

namespace choicematch {

Aggregate aggregate(const std::vector<double>& accuracies) {
  if (accuracies.empty()) throw EmptyError("aggregate of an empty accuracy list");
  const double n = static_cast<double>(accuracies.size());
  Aggregate a;
  for (double x : accuracies) a.mean += x;
  a.mean /= n;
  if (accuracies.size() < 2) {
    a.degenerate = true;
    return a;
  }
  double ss = 0.0;
  for (double x : accuracies) ss += (x - a.mean) * (x - a.mean);
  a.std = std::sqrt(ss / (n - 1.0));
  a.ci = 1.96 * a.std / std::sqrt(n);
  return a;
}

std::vector<double> SuiteResult::accuracies() const {
  std::vector<double> out;
  out.reserve(episodes.size());
  for (const auto& e : episodes) out.push_back(e.accuracy);
  return out;
}

double episode_accuracy(const std::vector<MatchResult>& predictions,
                        const std::vector<std::size_t>& gold) {
  if (predictions.size() != gold.size())
    throw DimensionMismatchError("prediction and gold counts differ");
  if (gold.empty()) throw EmptyError("episode without queries");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) correct += predictions[i].predicted == gold[i];
  return static_cast<double>(correct) / static_cast<double>(gold.size());
}

std::vector<Episode> sample_suite(const LabeledCorpus& corpus, Split split, const EpisodeSpec& spec,
                                  std::size_t count, std::uint64_t seed) {
  std::vector<Episode> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(sample_episode(corpus, split, spec, hash_combine(seed, i)));
  return out;
}

SuiteResult evaluate(const Model& model, const std::vector<Episode>& episodes,
                     const AdaptConfig& adapt, std::size_t workers) {
  const auto start = std::chrono::steady_clock::now();
  SuiteResult result;
  if (!episodes.empty()) {
    const auto& first = episodes.front();
    result.way = first.way;
    result.shot = first.shot;
    result.nota_rate = first.nota_rate;
    result.queries = first.queries.size();
  }
  result.episodes.resize(episodes.size());
  std::vector<std::exception_ptr> failures(episodes.size());
  const int threads = workers > 0 ? static_cast<int>(workers) : omp_get_max_threads();
  const auto n = static_cast<std::ptrdiff_t>(episodes.size());

#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    const auto i = static_cast<std::size_t>(k);
    try {
      const Episode& ep = episodes[i];
      const auto inputs = episode_inputs(model, ep);
      std::vector<ModelInput> queries;
      std::vector<std::size_t> gold;
      for (const auto& q : inputs.queries) {
        queries.push_back(q.input);
        gold.push_back(q.gold);
      }
      AdaptConfig local = adapt;
      local.seed = hash_combine(adapt.seed, ep.seed);
      if (inputs.support.empty()) local.epochs = 0;
      Model clone = model;
      auto adapted = adapt_and_predict(clone, inputs.support, queries, local);
      auto& out = result.episodes[i];
      out.seed = ep.seed;
      out.accuracy = episode_accuracy(adapted.predictions, gold);
      out.predictions = std::move(adapted.predictions);
      out.gold = std::move(gold);
    } catch (...) {
      failures[i] = std::current_exception();
    }
  }

  for (std::size_t i = 0; i < failures.size(); ++i) {
    if (!failures[i]) continue;
    try {
      std::rethrow_exception(failures[i]);
    } catch (const std::exception& e) {
      throw Error("episode " + std::to_string(i) + " (seed " + std::to_string(episodes[i].seed) +
                  "): " + e.what());
    }
  }
  if (!result.episodes.empty()) result.summary = aggregate(result.accuracies());
  result.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

nlohmann::ordered_json results_json(const SuiteResult& r) {
  nlohmann::ordered_json j;
  j["setting"] = {{"N", r.way},
                  {"K", r.shot},
                  {"nota_rate", r.nota_rate},
                  {"queries", r.queries},
                  {"episodes", r.episodes.size()},
                  {"T", r.episodes.size()}};
  j["mean"] = r.summary.mean;
  j["ci"] = r.summary.ci;
  j["std"] = r.summary.std;
  j["formula"] = kCiFormula;
  j["ci_method"] = r.summary.degenerate
                       ? "normal approximation; fewer than two episodes, ci and std reported as 0"
                       : "normal approximation";
  auto per = nlohmann::ordered_json::array();
  for (const auto& e : r.episodes) {
    nlohmann::ordered_json row;
    row["seed"] = e.seed;
    row["accuracy"] = e.accuracy;
    row["gold"] = e.gold;
    auto preds = nlohmann::ordered_json::array();
    for (const auto& p : e.predictions) preds.push_back(nlohmann::ordered_json::parse(to_json(p).dump()));
    row["predictions"] = std::move(preds);
    per.push_back(std::move(row));
  }
  j["per_episode"] = std::move(per);
  return j;
}

void write_results_csv(const std::vector<SuiteResult>& rows, std::ostream& out) {
  out << "N,K,nota_rate,T,acc,ci,std\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.4g,%zu,%.4f,%.4f,%.4f\n", r.way, r.shot, r.nota_rate,
                  r.episodes.size(), r.summary.mean, r.summary.ci, r.summary.std);
    out << buf;
  }
}

}  // namespace choicematch
