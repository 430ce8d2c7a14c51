#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "choicematch/encoder.hpp"
#include "choicematch/matching_head.hpp"
#include "choicematch/relation_core.hpp"
#include "choicematch/training.hpp"
#include "choicematch/triplet_paraphrase.hpp"
#include "json.hpp"

namespace choicematch {

/// Flat "dotted.key = value" entries. '#' starts a comment; blank lines are
/// ignored; a repeated key keeps the last value.
class KeyValues {
 public:
  static KeyValues parse(std::istream& in);
  static KeyValues load(const std::string& path);

  /// "a.b=value"; throws ConfigError when there is no '='.
  void apply_override(const std::string& assignment);
  void set(const std::string& key, const std::string& value) { entries_[key] = value; }

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

struct RunPaths {
  std::string corpus;         // relation corpus JSONL
  std::string catalog;        // relation catalog JSON (optional)
  std::string raw_text;       // one sentence per line, for forge-data
  std::string pseudo_corpus;  // forge-data output, pretrain input
  std::string checkpoint;     // model to start from
  std::string results_dir = "results";
};

/// Everything one command needs. Built from KeyValues; unknown keys and
/// malformed values raise ConfigError.
struct RunConfig {
  std::uint64_t seed = 13;
  EncoderProfile profile = EncoderProfile::tiny;
  EncoderConfig encoder;
  InstancePooling pooling = InstancePooling::opening_markers;
  std::size_t hash_dim = 64;
  RunPaths paths;

  PretrainCorpusConfig forge;
  std::string extractor_command;  // empty = rule-based extractor

  TrainConfig pretrain;
  TrainConfig meta;
  EpisodeSampling sampling;
  AdaptConfig adapt;

  EpisodeSpec episodes;
  std::size_t episode_count = 100;
  Split eval_split = Split::test;
  bool write_csv = true;

  static RunConfig from(const KeyValues& kv);

  /// Every effective setting under its config key, sorted.
  nlohmann::ordered_json to_json() const;
  /// 16 hex digits of a hash over to_json().dump().
  std::string hash() const;

  /// Seed for a named stochastic component, derived from the global seed.
  std::uint64_t component_seed(std::string_view component) const;
};

/// KeyValues::load (when `path` is nonempty) + overrides + RunConfig::from.
/// A missing or unreadable file is a ConfigError naming the path.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides);

/// Text of a config file that reproduces `cfg`.
std::string render_config(const RunConfig& cfg);

}  // namespace choicematch
