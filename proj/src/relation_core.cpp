#include "choicematch/relation_core.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "choicematch/errors.hpp"
#include "choicematch/random.hpp"
#include "json.hpp"

namespace choicematch {

namespace {

constexpr std::uint64_t kSupportSalt = 0x5350505254ULL;
constexpr std::uint64_t kNotaSalt = 0x4e4f5441ULL;
constexpr std::uint64_t kOrderSalt = 0x4f52444552ULL;

std::string describe(const RelationInstance& inst) {
  std::string s = "[" + join_tokens(inst.tokens) + "]";
  if (inst.relation) s += " relation=" + *inst.relation;
  return s;
}

}  // namespace

RelationType nota_relation() {
  return RelationType{std::string(kNotaId), {"others"}, true};
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val" || s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  throw InvariantError("unknown split tag '" + std::string(s) + "'");
}

std::vector<std::string> LabeledCorpus::relations_in(Split split) const {
  std::vector<std::string> out;
  for (const auto& [id, tag] : splits)
    if (tag == split && relations.count(id)) out.push_back(id);
  return out;
}

std::map<std::string, std::vector<std::size_t>> LabeledCorpus::index_by_relation() const {
  std::map<std::string, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < instances.size(); ++i)
    if (instances[i].relation) out[*instances[i].relation].push_back(i);
  return out;
}

std::size_t Episode::choice_index(const std::string& relation_id) const {
  for (std::size_t i = 0; i < choices.size(); ++i)
    if (choices[i].id == relation_id) return i;
  throw IndexError("relation '" + relation_id + "' is not a choice of this episode");
}

const RelationInstance& validate_instance(const RelationInstance& inst) {
  if (inst.tokens.empty()) throw EmptyTokensError("instance has no tokens");
  const std::size_t n = inst.tokens.size();
  if (inst.head.first > inst.head.last || inst.tail.first > inst.tail.last)
    throw SpanOrderError("span end precedes span start in " + describe(inst));
  if (inst.head.last >= inst.tail.first)
    throw SpanOrderError("head span must end before tail span starts in " + describe(inst));
  if (inst.tail.last >= n)
    throw SpanBoundsError("tail span ends past token " + std::to_string(n) + " in " +
                          describe(inst));
  return inst;
}

std::size_t nota_query_count(double nota_rate, std::size_t query_count) {
  // The nudge keeps products such as 0.15 * 10 on the intended side of .5.
  const double x = nota_rate * static_cast<double>(query_count);
  return static_cast<std::size_t>(std::floor(x + 0.5 + 1e-9));
}

Episode sample_episode(const LabeledCorpus& corpus, Split split, const EpisodeSpec& spec,
                       std::uint64_t seed) {
  if (spec.nota_rate < 0.0 || spec.nota_rate >= 1.0)
    throw InvariantError("nota_rate must lie in [0, 1)");
  if (spec.way == 0) throw InsufficientRelationsError("episode needs at least one relation");

  const bool with_nota = spec.nota_rate > 0.0;
  const auto ids = corpus.relations_in(split);
  const std::size_t needed = spec.way + (with_nota ? 1 : 0);
  if (ids.size() < needed)
    throw InsufficientRelationsError("split '" + std::string(split_name(split)) + "' has " +
                                     std::to_string(ids.size()) + " relations, need " +
                                     std::to_string(needed));

  const auto by_relation = corpus.index_by_relation();
  static const std::vector<std::size_t> kNone;
  auto members = [&](const std::string& id) -> const std::vector<std::size_t>& {
    auto it = by_relation.find(id);
    return it == by_relation.end() ? kNone : it->second;
  };

  std::vector<std::pair<std::uint64_t, std::string>> ranked;
  ranked.reserve(ids.size());
  for (const auto& id : ids) ranked.emplace_back(hash_combine(seed, fnv1a(id)), id);
  std::sort(ranked.begin(), ranked.end());

  Episode ep;
  ep.nota_rate = spec.nota_rate;
  ep.seed = seed;
  ep.way = spec.way;
  ep.shot = spec.shot;

  const std::size_t nota_count = nota_query_count(spec.nota_rate, spec.queries);
  const std::size_t regular = spec.queries - nota_count;

  struct Pick {
    std::uint64_t key;
    std::string source;  // relation the instance was drawn from
    std::size_t ordinal;
    std::size_t index;
    std::string relation;
  };
  // Keys depend on relation ids and per-relation ordinals only, never on
  // corpus positions, so unrelated relations cannot perturb the order.
  auto order_key = [&](const std::string& id, std::size_t ordinal) {
    return hash_combine(hash_combine(seed ^ kOrderSalt, fnv1a(id)), ordinal);
  };
  std::vector<Pick> query_picks;

  std::set<std::string> chosen;
  for (std::size_t r = 0; r < spec.way; ++r) {
    const std::string& id = ranked[r].second;
    chosen.insert(id);
    ep.choices.push_back(corpus.relations.at(id));

    const auto& pool = members(id);
    const std::size_t q = regular / spec.way + (r < regular % spec.way ? 1 : 0);
    if (pool.size() < spec.shot + q)
      throw InsufficientInstancesError("relation '" + id + "' has " +
                                       std::to_string(pool.size()) + " instances, need " +
                                       std::to_string(spec.shot + q));
    std::vector<std::pair<std::uint64_t, std::size_t>> order;
    const std::uint64_t rel_key = hash_combine(seed ^ kSupportSalt, fnv1a(id));
    for (std::size_t k = 0; k < pool.size(); ++k)
      order.emplace_back(hash_combine(rel_key, k), k);
    std::sort(order.begin(), order.end());

    auto& support = ep.support[id];
    auto& origin = ep.support_origin[id];
    for (std::size_t k = 0; k < spec.shot; ++k) {
      origin.push_back(pool[order[k].second]);
      support.push_back(corpus.instances[pool[order[k].second]]);
    }
    for (std::size_t k = spec.shot; k < spec.shot + q; ++k) {
      const std::size_t ordinal = order[k].second;
      query_picks.push_back({order_key(id, ordinal), id, ordinal, pool[ordinal], id});
    }
  }

  if (with_nota) {
    std::vector<std::tuple<std::uint64_t, std::string, std::size_t>> pool;  // key, id, ordinal
    for (const auto& id : ids) {
      if (chosen.count(id)) continue;
      const std::uint64_t rel_key = hash_combine(seed ^ kNotaSalt, fnv1a(id));
      const auto& m = members(id);
      for (std::size_t k = 0; k < m.size(); ++k)
        pool.emplace_back(hash_combine(rel_key, k), id, k);
    }
    if (pool.size() < nota_count)
      throw InsufficientInstancesError("not enough out-of-episode instances for " +
                                       std::to_string(nota_count) + " NOTA queries");
    std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(nota_count),
                      pool.end());
    for (std::size_t k = 0; k < nota_count; ++k) {
      const auto& [key, id, ordinal] = pool[k];
      query_picks.push_back(
          {order_key(id, ordinal), id, ordinal, members(id)[ordinal], std::string(kNotaId)});
    }
    ep.choices.push_back(nota_relation());
  }

  std::sort(query_picks.begin(), query_picks.end(), [](const Pick& a, const Pick& b) {
    return std::tie(a.key, a.source, a.ordinal) < std::tie(b.key, b.source, b.ordinal);
  });
  for (const auto& p : query_picks) {
    RelationInstance q = corpus.instances[p.index];
    q.relation = p.relation;
    ep.queries.push_back(std::move(q));
    ep.query_origin.push_back(p.index);
  }
  return ep;
}

void check_episode(const Episode& ep, const EpisodeSpec& spec) {
  auto fail = [](const std::string& what) { throw InvariantError("episode: " + what); };
  if (ep.support.size() != spec.way) fail("support does not hold exactly N relations");
  for (const auto& [id, list] : ep.support) {
    if (list.size() != spec.shot) fail("relation '" + id + "' does not hold exactly K instances");
    for (const auto& inst : list)
      if (!inst.relation || *inst.relation != id) fail("support instance mislabeled");
  }
  const bool with_nota = spec.nota_rate > 0.0;
  if (ep.choices.size() != spec.way + (with_nota ? 1 : 0)) fail("wrong choice count");
  for (std::size_t i = 0; i < spec.way; ++i)
    if (ep.choices[i].is_nota || !ep.support.count(ep.choices[i].id))
      fail("choice " + std::to_string(i) + " is not a support relation");
  if (with_nota && !ep.choices.back().is_nota) fail("NOTA choice missing");
  if (ep.queries.size() != spec.queries) fail("wrong query count");

  std::size_t nota = 0;
  for (const auto& q : ep.queries) {
    if (!q.relation) fail("unlabeled query");
    if (*q.relation == kNotaId) {
      ++nota;
    } else if (!ep.support.count(*q.relation)) {
      fail("query gold '" + *q.relation + "' outside the episode");
    }
  }
  if (nota != nota_query_count(spec.nota_rate, spec.queries)) fail("wrong NOTA query count");

  std::set<std::size_t> seen;
  for (const auto& [id, origin] : ep.support_origin)
    for (std::size_t i : origin)
      if (!seen.insert(i).second) fail("support instance repeated");
  for (std::size_t i : ep.query_origin)
    if (!seen.insert(i).second) fail("instance shared between support and queries");
}

// ---------------------------------------------------------------------------
// Files

namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

Span read_span(const json& v, const char* key, std::size_t line) {
  if (!v.contains(key) || !v[key].is_array() || v[key].size() != 2 ||
      !v[key][0].is_number_integer() || !v[key][1].is_number_integer())
    throw ParseError(std::string("'") + key + "' must be a two-integer array", line);
  const auto a = v[key][0].get<long long>();
  const auto b = v[key][1].get<long long>();
  if (a < 1 || b < 1)
    throw SpanBoundsError("line " + std::to_string(line) + ": '" + key +
                          "' uses 1-based indices, got " + std::to_string(a) + "," +
                          std::to_string(b));
  return Span{static_cast<std::size_t>(a - 1), static_cast<std::size_t>(b - 1)};
}

}  // namespace

LabeledCorpus parse_corpus(std::istream& in, std::istream* catalog) {
  LabeledCorpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json v;
    try {
      v = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(e.what(), lineno);
    }
    if (!v.is_object()) throw ParseError("expected a JSON object", lineno);
    if (!v.contains("tokens") || !v["tokens"].is_array())
      throw ParseError("'tokens' must be an array of strings", lineno);
    RelationInstance inst;
    for (const auto& t : v["tokens"]) {
      if (!t.is_string()) throw ParseError("'tokens' must be an array of strings", lineno);
      inst.tokens.push_back(t.get<std::string>());
    }
    inst.head = read_span(v, "head", lineno);
    inst.tail = read_span(v, "tail", lineno);
    if (v.contains("relation")) {
      if (!v["relation"].is_string()) throw ParseError("'relation' must be a string", lineno);
      inst.relation = v["relation"].get<std::string>();
    }
    try {
      validate_instance(inst);
    } catch (const Error& e) {
      throw InvariantError("line " + std::to_string(lineno) + ": " + e.what());
    }
    corpus.instances.push_back(std::move(inst));
  }

  if (catalog) {
    json cat;
    try {
      cat = json::parse(*catalog);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("relation catalog: ") + e.what(), 1);
    }
    if (!cat.is_object()) throw ParseError("relation catalog must be a JSON object", 1);
    for (const auto& [id, entry] : cat.items()) {
      if (!entry.is_object() || !entry.contains("description") ||
          !entry["description"].is_string())
        throw ParseError("relation '" + id + "' needs a string description", 1);
      RelationType rel{id, split_whitespace(entry["description"].get<std::string>()), false};
      if (rel.description.empty())
        throw InvariantError("relation '" + id + "' has an empty description");
      corpus.relations.emplace(id, std::move(rel));
      corpus.splits.emplace(id, parse_split(entry.value("split", std::string("train"))));
    }
  } else {
    for (const auto& inst : corpus.instances) {
      if (!inst.relation || corpus.relations.count(*inst.relation)) continue;
      std::string text = *inst.relation;
      std::replace(text.begin(), text.end(), '_', ' ');
      corpus.relations.emplace(*inst.relation,
                               RelationType{*inst.relation, split_whitespace(text), false});
      corpus.splits.emplace(*inst.relation, Split::train);
    }
  }

  for (std::size_t i = 0; i < corpus.instances.size(); ++i) {
    const auto& r = corpus.instances[i].relation;
    if (r && !corpus.relations.count(*r))
      throw InvariantError("instance " + std::to_string(i + 1) + " references unknown relation '" +
                           *r + "'");
  }
  return corpus;
}

LabeledCorpus read_corpus(const std::string& corpus_path,
                          const std::optional<std::string>& catalog_path) {
  std::ifstream in(corpus_path);
  if (!in) throw Error("cannot open corpus file '" + corpus_path + "'");
  if (!catalog_path) return parse_corpus(in, nullptr);
  std::ifstream cat(*catalog_path);
  if (!cat) throw Error("cannot open relation catalog '" + *catalog_path + "'");
  return parse_corpus(in, &cat);
}

void write_corpus_jsonl(const LabeledCorpus& corpus, std::ostream& out) {
  for (const auto& inst : corpus.instances) {
    ordered_json v;
    v["tokens"] = inst.tokens;
    v["head"] = {inst.head.first + 1, inst.head.last + 1};
    v["tail"] = {inst.tail.first + 1, inst.tail.last + 1};
    if (inst.relation) v["relation"] = *inst.relation;
    out << v.dump() << '\n';
  }
}

void write_catalog_json(const LabeledCorpus& corpus, std::ostream& out) {
  json cat = json::object();
  for (const auto& [id, rel] : corpus.relations) {
    auto it = corpus.splits.find(id);
    cat[id] = {{"description", join_tokens(rel.description)},
               {"split", split_name(it == corpus.splits.end() ? Split::train : it->second)}};
  }
  out << cat.dump(2) << '\n';
}

void write_corpus(const LabeledCorpus& corpus, const std::string& corpus_path,
                  const std::optional<std::string>& catalog_path) {
  std::ofstream out(corpus_path);
  if (!out) throw Error("cannot write corpus file '" + corpus_path + "'");
  write_corpus_jsonl(corpus, out);
  if (catalog_path) {
    std::ofstream cat(*catalog_path);
    if (!cat) throw Error("cannot write relation catalog '" + *catalog_path + "'");
    write_catalog_json(corpus, cat);
  }
}

Tokens split_whitespace(std::string_view text) {
  Tokens out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string join_tokens(const Tokens& tokens, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

}  // namespace choicematch
