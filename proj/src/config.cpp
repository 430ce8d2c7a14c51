#include "choicematch/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "choicematch/errors.hpp"
#include "choicematch/random.hpp"

namespace choicematch {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = first + value.size();
  std::from_chars_result r{};
  if (!std::is_floating_point_v<T> && !value.empty() && value[0] == '-')
    r.ec = std::errc::invalid_argument;
  else
    r = std::from_chars(first, last, out);
  if (r.ec != std::errc{} || r.ptr != last || value.empty())
    throw ConfigError("'" + key + "': cannot parse '" + value + "' as a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("'" + key + "': expected true or false, got '" + v + "'");
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& value) {
  std::vector<T> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(key, trim(item)));
  if (out.empty()) throw ConfigError("'" + key + "': empty list");
  return out;
}

std::string format(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
std::string format_list(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>) out += format(xs[i]);
    else out += std::to_string(xs[i]);
  }
  return out;
}

struct Field {
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

Field size_field(std::string key, std::size_t& v) {
  return {key, [&v, key](const std::string& s) { v = parse_number<std::size_t>(key, s); },
          [&v] { return std::to_string(v); }};
}
Field u64_field(std::string key, std::uint64_t& v) {
  return {key, [&v, key](const std::string& s) { v = parse_number<std::uint64_t>(key, s); },
          [&v] { return std::to_string(v); }};
}
Field double_field(std::string key, double& v) {
  return {key, [&v, key](const std::string& s) { v = parse_number<double>(key, s); },
          [&v] { return format(v); }};
}
Field bool_field(std::string key, bool& v) {
  return {key, [&v, key](const std::string& s) { v = parse_bool(key, s); },
          [&v] { return std::string(v ? "true" : "false"); }};
}
Field string_field(std::string key, std::string& v) {
  return {key, [&v](const std::string& s) { v = s; }, [&v] { return v; }};
}

void train_fields(std::vector<Field>& f, const std::string& p, TrainConfig& t) {
  f.push_back(double_field(p + ".lr", t.lr));
  f.push_back(double_field(p + ".weight_decay", t.weight_decay));
  f.push_back(double_field(p + ".dropout", t.dropout));
  f.push_back(double_field(p + ".lr_decay", t.lr_decay));
  f.push_back(size_field(p + ".epochs", t.epochs));
  f.push_back(double_field(p + ".clip_norm", t.clip_norm));
}

std::vector<Field> fields(RunConfig& c) {
  std::vector<Field> f;
  f.push_back(u64_field("seed", c.seed));
  f.push_back({"encoder.profile", [&c](const std::string& s) { c.profile = parse_profile(s); },
               [&c] { return std::string(profile_name(c.profile)); }});
  f.push_back(size_field("encoder.hidden_dim", c.encoder.hidden_dim));
  f.push_back(size_field("encoder.layers", c.encoder.layers));
  f.push_back(size_field("encoder.heads", c.encoder.heads));
  f.push_back(size_field("encoder.ffn_dim", c.encoder.ffn_dim));
  f.push_back(size_field("encoder.max_positions", c.encoder.max_positions));
  f.push_back(double_field("encoder.dropout", c.encoder.dropout));
  f.push_back(size_field("encoder.hash_dim", c.hash_dim));
  f.push_back({"encoder.pooling",
               [&c](const std::string& s) {
                 if (s == "opening") c.pooling = InstancePooling::opening_markers;
                 else if (s == "all") c.pooling = InstancePooling::all_markers;
                 else throw ConfigError("'encoder.pooling': expected opening or all, got '" + s + "'");
               },
               [&c] {
                 return std::string(c.pooling == InstancePooling::opening_markers ? "opening" : "all");
               }});

  f.push_back(string_field("paths.corpus", c.paths.corpus));
  f.push_back(string_field("paths.catalog", c.paths.catalog));
  f.push_back(string_field("paths.raw_text", c.paths.raw_text));
  f.push_back(string_field("paths.pseudo_corpus", c.paths.pseudo_corpus));
  f.push_back(string_field("paths.checkpoint", c.paths.checkpoint));
  f.push_back(string_field("paths.results_dir", c.paths.results_dir));

  f.push_back(size_field("forge.batch_size", c.forge.batch_size));
  f.push_back(size_field("forge.max_predicate_tokens", c.forge.max_predicate_tokens));
  f.push_back(string_field("forge.extractor_command", c.extractor_command));

  train_fields(f, "pretrain", c.pretrain);
  train_fields(f, "meta_train", c.meta);
  f.push_back(size_field("meta_train.steps", c.meta.steps));
  f.push_back({"meta_train.ways",
               [&c](const std::string& s) { c.sampling.ways = parse_list<std::size_t>("meta_train.ways", s); },
               [&c] { return format_list(c.sampling.ways); }});
  f.push_back({"meta_train.shots",
               [&c](const std::string& s) { c.sampling.shots = parse_list<std::size_t>("meta_train.shots", s); },
               [&c] { return format_list(c.sampling.shots); }});
  f.push_back(size_field("meta_train.queries", c.sampling.queries));
  f.push_back({"meta_train.nota_rates",
               [&c](const std::string& s) {
                 c.sampling.nota_rates = parse_list<double>("meta_train.nota_rates", s);
               },
               [&c] { return format_list(c.sampling.nota_rates); }});

  f.push_back(size_field("adapt.epochs", c.adapt.epochs));
  f.push_back(double_field("adapt.lr", c.adapt.lr));
  f.push_back(bool_field("adapt.restore", c.adapt.restore));

  f.push_back(size_field("episodes.N", c.episodes.way));
  f.push_back(size_field("episodes.K", c.episodes.shot));
  f.push_back(size_field("episodes.Q", c.episodes.queries));
  f.push_back(double_field("episodes.nota_rate", c.episodes.nota_rate));
  f.push_back(size_field("episodes.count", c.episode_count));
  f.push_back({"episodes.split", [&c](const std::string& s) { c.eval_split = parse_split(s); },
               [&c] { return std::string(split_name(c.eval_split)); }});
  f.push_back(bool_field("eval.csv", c.write_csv));
  return f;
}

}  // namespace

KeyValues KeyValues::parse(std::istream& in) {
  KeyValues kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", lineno);
    const std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw ParseError("empty key", lineno);
    kv.entries_[key] = trim(std::string_view(body).substr(eq + 1));
  }
  return kv;
}

KeyValues KeyValues::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  try {
    return parse(in);
  } catch (const ParseError& e) {
    throw ConfigError(path + ":" + std::to_string(e.line()) + ": " + e.what());
  }
}

void KeyValues::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = trim(std::string_view(assignment).substr(0, eq));
  if (key.empty()) throw ConfigError("override '" + assignment + "' has an empty key");
  entries_[key] = trim(std::string_view(assignment).substr(eq + 1));
}

RunConfig RunConfig::from(const KeyValues& kv) {
  RunConfig c;
  if (const char* root = std::getenv("CHOICEMATCH_RESULTS_ROOT"); root && *root)
    c.paths.results_dir = root;
  auto table = fields(c);
  for (const auto& [key, value] : kv.entries()) {
    auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->set(value);
  }
  c.encoder.seed = c.component_seed("encoder");
  c.forge.seed = c.component_seed("forge");
  c.pretrain.seed = c.component_seed("pretrain");
  c.meta.seed = c.component_seed("meta_train");
  c.adapt.seed = c.component_seed("adapt");
  c.meta.batch_size = c.sampling.queries;
  c.pretrain.batch_size = c.forge.batch_size;

  try {
    EncoderConfig probe = c.encoder;
    probe.validate();
    c.pretrain.validate();
    c.meta.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (c.sampling.ways.empty() || c.sampling.shots.empty() || c.sampling.nota_rates.empty())
    throw ConfigError("meta_train episode ranges must be nonempty");
  for (double r : c.sampling.nota_rates)
    if (r < 0.0 || r > 1.0) throw ConfigError("meta_train.nota_rates must lie in [0, 1]");
  if (c.episodes.nota_rate < 0.0 || c.episodes.nota_rate > 1.0)
    throw ConfigError("episodes.nota_rate must lie in [0, 1]");
  if (c.episodes.way == 0) throw ConfigError("episodes.N must be positive");
  if (c.forge.batch_size == 0) throw ConfigError("forge.batch_size must be positive");
  return c;
}

nlohmann::ordered_json RunConfig::to_json() const {
  auto table = fields(const_cast<RunConfig&>(*this));
  std::sort(table.begin(), table.end(), [](const Field& a, const Field& b) { return a.key < b.key; });
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& f : table) j[f.key] = f.get();
  return j;
}

std::string RunConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(mix64(fnv1a(to_json().dump()))));
  return buf;
}

std::uint64_t RunConfig::component_seed(std::string_view component) const {
  return hash_combine(seed, fnv1a(component));
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  KeyValues kv = path.empty() ? KeyValues{} : KeyValues::load(path);
  for (const auto& o : overrides) kv.apply_override(o);
  return RunConfig::from(kv);
}

std::string render_config(const RunConfig& cfg) {
  std::string out;
  const auto j = cfg.to_json();
  for (const auto& [key, value] : j.items()) out += key + " = " + value.get<std::string>() + "\n";
  return out;
}

}  // namespace choicematch
