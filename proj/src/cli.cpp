#include "choicematch/cli.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <ostream>

#include <omp.h>

#include "CLI11.hpp"
#include "choicematch/config.hpp"
#include "choicematch/errors.hpp"
#include "choicematch/eval_harness.hpp"
#include "choicematch/selftest.hpp"
#include "json.hpp"

#ifndef CHOICEMATCH_VERSION
#define CHOICEMATCH_VERSION "0.0.0"
#endif

namespace choicematch {

namespace fs = std::filesystem;

namespace {

struct Run {
  std::string command;
  RunConfig cfg;
  std::string hash;
  fs::path dir;
  std::vector<std::string> artifacts;
  std::ostream& out;

  fs::path artifact(const std::string& kind) {
    const fs::path p = dir / (command + "-" + hash + "." + kind);
    artifacts.push_back(p.string());
    return p;
  }
};

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error("cannot write '" + p.string() + "'");
  return f;
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

const std::string& require_path(const std::string& value, const char* key) {
  if (value.empty()) throw ConfigError(std::string("'") + key + "' is not set");
  if (!fs::exists(value)) throw ConfigError(std::string("'") + key + "' names a missing file: " + value);
  return value;
}

std::string vocab_path_for(const std::string& checkpoint) {
  return fs::path(checkpoint).replace_extension(".vocab").string();
}

LabeledCorpus load_corpus(const RunConfig& cfg) {
  const auto& corpus = require_path(cfg.paths.corpus, "paths.corpus");
  std::optional<std::string> catalog;
  if (!cfg.paths.catalog.empty()) catalog = require_path(cfg.paths.catalog, "paths.catalog");
  return read_corpus(corpus, catalog);
}

std::vector<PseudoBatch> load_pseudo(const RunConfig& cfg) {
  const auto& path = require_path(cfg.paths.pseudo_corpus, "paths.pseudo_corpus");
  std::ifstream in(path);
  return read_pseudo_corpus(in);
}

void add_corpus_texts(std::vector<Tokens>& texts, const LabeledCorpus& c) {
  for (const auto& inst : c.instances) texts.push_back(inst.tokens);
  for (const auto& [id, rel] : c.relations) texts.push_back(rel.description);
}

void add_pseudo_texts(std::vector<Tokens>& texts, const std::vector<PseudoBatch>& batches) {
  for (const auto& b : batches) {
    for (const auto& i : b.instances) texts.push_back(i.paraphrase);
    for (const auto& c : b.choices) texts.push_back(c);
  }
}

/// Loads paths.checkpoint (and its sibling vocabulary) when set, otherwise
/// initializes a fresh model whose vocabulary covers every configured corpus.
Model load_model(const RunConfig& cfg, std::ostream& out) {
  Model m;
  m.profile = cfg.profile;
  m.pooling = cfg.pooling;
  m.hash_dim = cfg.hash_dim;
  m.max_len = cfg.encoder.max_positions;
  if (cfg.profile == EncoderProfile::external)
    throw ConfigError("encoder.profile = external has no backend in this build");

  if (!cfg.paths.checkpoint.empty()) {
    if (cfg.profile != EncoderProfile::tiny)
      throw ConfigError("paths.checkpoint is only meaningful for encoder.profile = tiny");
    const auto& ckpt = require_path(cfg.paths.checkpoint, "paths.checkpoint");
    m.params = load_checkpoint(ckpt);
    m.vocab = Vocabulary::load(require_path(vocab_path_for(ckpt), "checkpoint vocabulary"));
    if (m.vocab.size() != m.params.config.vocab_size)
      throw CheckpointError("vocabulary size does not match the checkpoint");
    m.max_len = m.params.config.max_positions;
    out << "loaded " << ckpt << " (" << m.params.parameter_count() << " parameters)\n";
    return m;
  }

  std::vector<Tokens> texts;
  if (!cfg.paths.corpus.empty()) add_corpus_texts(texts, load_corpus(cfg));
  if (!cfg.paths.pseudo_corpus.empty()) add_pseudo_texts(texts, load_pseudo(cfg));
  m.vocab = Vocabulary::build(texts);
  if (cfg.profile == EncoderProfile::tiny) {
    EncoderConfig ec = cfg.encoder;
    Model fresh = make_tiny_model(m.vocab, ec);
    m.params = std::move(fresh.params);
    out << "initialized a fresh tiny encoder (" << m.params.parameter_count() << " parameters)\n";
  }
  return m;
}

void save_model(Run& run, const Model& m, const Trace& trace) {
  const auto ckpt = run.artifact("ckpt");
  nlohmann::json meta = {{"command", run.command}, {"config_hash", run.hash}, {"seed", run.cfg.seed}};
  save_checkpoint(m.params, ckpt.string(), meta);
  m.vocab.save(run.artifact("vocab").string());
  auto csv = open_out(run.artifact("trace.csv"));
  write_trace_csv(trace, csv, "command=" + run.command + " config_hash=" + run.hash);
  run.out << "checkpoint: " << ckpt.string() << '\n';
  if (!trace.empty()) run.out << "final loss: " << trace.back().loss << '\n';
}

void forge_data(Run& run) {
  const auto& raw = require_path(run.cfg.paths.raw_text, "paths.raw_text");
  std::ifstream in(raw);
  const auto sentences = read_sentences(in);
  if (sentences.empty()) throw Error("raw text '" + raw + "' has no sentences");
  std::unique_ptr<TripletExtractor> extractor;
  if (run.cfg.extractor_command.empty()) extractor = std::make_unique<RuleBasedExtractor>();
  else extractor = std::make_unique<CommandExtractor>(run.cfg.extractor_command);
  const auto batches = build_pretraining_corpus(sentences, run.cfg.forge, *extractor);

  const auto path = run.artifact("jsonl");
  auto f = open_out(path);
  write_pseudo_corpus(batches, f);
  std::size_t instances = 0;
  for (const auto& b : batches) instances += b.instances.size();
  nlohmann::ordered_json meta;
  meta["command"] = run.command;
  meta["config_hash"] = run.hash;
  meta["sentences"] = sentences.size();
  meta["batches"] = batches.size();
  meta["instances"] = instances;
  auto side = open_out(run.artifact("meta.json"));
  side << meta.dump(2) << '\n';
  run.out << "pseudo corpus: " << path.string() << " (" << batches.size() << " batches, "
          << instances << " instances)\n";
}

void pretrain_cmd(Run& run) {
  const auto batches = load_pseudo(run.cfg);
  Model m = load_model(run.cfg, run.out);
  if (!m.trainable()) throw ConfigError("pretrain needs encoder.profile = tiny");
  const auto result = pretrain(m, batches, run.cfg.pretrain);
  save_model(run, m, result.trace);
}

void meta_train_cmd(Run& run) {
  const auto corpus = load_corpus(run.cfg);
  Model m = load_model(run.cfg, run.out);
  if (!m.trainable()) throw ConfigError("meta-train needs encoder.profile = tiny");
  const auto result = meta_train(m, corpus, run.cfg.sampling, run.cfg.meta);
  save_model(run, m, result.trace);
}

void eval_cmd(Run& run, bool zero_shot, std::size_t workers) {
  const auto corpus = load_corpus(run.cfg);
  const Model m = load_model(run.cfg, run.out);
  EpisodeSpec spec = run.cfg.episodes;
  AdaptConfig adapt = run.cfg.adapt;
  if (zero_shot) {
    spec.shot = 0;
    adapt.epochs = 0;
  }
  const auto episodes =
      sample_suite(corpus, run.cfg.eval_split, spec, run.cfg.episode_count, run.cfg.component_seed("episodes"));
  auto result = evaluate(m, episodes, adapt, workers);

  auto doc = results_json(result);
  doc["command"] = run.command;
  doc["config_hash"] = run.hash;
  const auto path = run.artifact("results.json");
  auto f = open_out(path);
  f << doc.dump(2) << '\n';
  if (run.cfg.write_csv) {
    auto csv = open_out(run.artifact("results.csv"));
    csv << "# command=" << run.command << " config_hash=" << run.hash << '\n';
    write_results_csv({result}, csv);
  }
  char line[160];
  std::snprintf(line, sizeof line, "%zu-way %zu-shot nota=%.2f T=%zu: acc %.4f ci %.4f std %.4f\n",
                result.way, result.shot, result.nota_rate, result.episodes.size(), result.summary.mean,
                result.summary.ci, result.summary.std);
  run.out << line << "results: " << path.string() << '\n';
}

void write_manifest(Run& run, const std::string& started, double seconds, int status,
                    std::size_t workers) {
  nlohmann::ordered_json m;
  m["command"] = run.command;
  m["config_hash"] = run.hash;
  m["seed"] = run.cfg.seed;
  m["status"] = status;
  m["started_at"] = started;
  m["runtime_seconds"] = seconds;
  m["workers"] = workers > 0 ? static_cast<int>(workers) : omp_get_max_threads();
  m["versions"] = {{"choicematch", CHOICEMATCH_VERSION},
                   {"compiler", __VERSION__},
                   {"openmp", _OPENMP},
                   {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
  m["artifacts"] = run.artifacts;
  m["config"] = run.cfg.to_json();
  auto f = open_out(run.dir / (run.command + "-" + run.hash + ".manifest.json"));
  f << m.dump(2) << '\n';
}

}  // namespace

int run(const std::string& command, const std::string& config_path,
        const std::vector<std::string>& overrides, std::size_t workers, std::ostream& out,
        std::ostream& err) {
  if (std::find(std::begin(kCommands), std::end(kCommands), command) == std::end(kCommands)) {
    err << "unknown command '" << command << "'\n";
    return kExitUsage;
  }
  RunConfig cfg;
  try {
    cfg = load_run_config(config_path, overrides);
  } catch (const Error& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  Run r{command, cfg, cfg.hash(), fs::path(cfg.paths.results_dir), {}, out};
  const std::string started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  int status = kExitOk;
  try {
    fs::create_directories(r.dir);
    if (workers > 0) omp_set_num_threads(static_cast<int>(workers));
    if (command == "forge-data") forge_data(r);
    else if (command == "pretrain") pretrain_cmd(r);
    else if (command == "meta-train") meta_train_cmd(r);
    else if (command == "eval") eval_cmd(r, false, workers);
    else if (command == "zero-shot-eval") eval_cmd(r, true, workers);
    else if (run_selftest(out) != 0) status = kExitRuntime;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    status = kExitConfig;
  } catch (const std::exception& e) {
    err << command << " failed: " << e.what() << '\n';
    status = kExitRuntime;
  }
  try {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(r, started, secs, status, workers);
  } catch (const std::exception& e) {
    err << "cannot write manifest: " << e.what() << '\n';
    if (status == kExitOk) status = kExitRuntime;
  }
  return status;
}

int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Low-shot relation extraction with multi-choice matching networks"};
  std::string command;
  std::string config;
  std::vector<std::string> overrides;
  std::size_t workers = 0;
  app.add_option("command", command, "forge-data | pretrain | meta-train | eval | zero-shot-eval | selftest")
      ->required();
  app.add_option("config", config, "key = value config file");
  app.add_option("--set", overrides, "override one config key (key=value), repeatable");
  app.add_option("--workers", workers, "parallel workers (default: all cores)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << app.help();
    return kExitUsage;
  }
  return run(command, config, overrides, workers, out, err);
}

}  // namespace choicematch
