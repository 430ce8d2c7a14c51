#include "choicematch/synthetic.hpp"

#include <array>
#include <cstdio>

#include "choicematch/errors.hpp"
#include "choicematch/prompt_codec.hpp"
#include "choicematch/random.hpp"

namespace choicematch {

namespace {

constexpr std::array<std::string_view, 14> kOnsets = {"b", "d", "f", "g", "k", "l", "m",
                                                      "n", "p", "r", "t", "v", "z", "sh"};
constexpr std::array<std::string_view, 5> kVowels = {"a", "e", "i", "o", "u"};
constexpr std::array<std::string_view, 4> kCodas = {"", "n", "l", "r"};

/// Draws distinct pronounceable words that never end in "s" or "ed", so the
/// chunker reads them as nouns unless told otherwise.
class WordForge {
 public:
  explicit WordForge(std::uint64_t seed) : rng_(seed) {}

  void reserve(const std::set<std::string>& words) { used_.insert(words.begin(), words.end()); }

  std::string draw(std::size_t syllables) {
    for (;;) {
      std::string w;
      for (std::size_t s = 0; s < syllables; ++s) {
        w += kOnsets[rng_.below(kOnsets.size())];
        w += kVowels[rng_.below(kVowels.size())];
      }
      w += kCodas[rng_.below(kCodas.size())];
      if (used_.insert(w).second) return w;
    }
  }

  std::vector<std::string> pool(std::size_t n, std::size_t syllables) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(draw(syllables));
    return out;
  }

 private:
  Rng rng_;
  std::set<std::string> used_;
};

std::string capitalize(std::string w) {
  if (!w.empty()) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
  return w;
}

template <class Pool>
const auto& pick(const Pool& pool, Rng& rng) {
  return pool[rng.below(pool.size())];
}

/// Two different entries.
template <class Pool>
std::pair<std::string, std::string> pick_pair(const Pool& pool, Rng& rng) {
  const std::size_t a = rng.below(pool.size());
  const std::size_t b = (a + 1 + rng.below(pool.size() - 1)) % pool.size();
  return {pool[a], pool[b]};
}

}  // namespace

LabeledCorpus make_relation_corpus(const RelationCorpusSpec& spec) {
  const std::size_t train = spec.train_relations;
  const std::size_t test = spec.relations - std::min(spec.relations, train);
  if (train > spec.relations) throw ConfigError("train_relations exceeds relations");
  if (train < 4) throw ConfigError("at least 4 training relations are needed");
  if (test > train / 2) throw ConfigError("at most train_relations/2 test relations are supported");

  // Training relation r is described by words (r, r+1); test relation k by
  // (k, k + train/2). Test pairs are new and pairwise disjoint.
  WordForge forge(hash_combine(spec.seed, fnv1a("relation-words")));
  const auto words = forge.pool(train, 3);
  const auto fillers = forge.pool(40, 2);
  std::vector<std::string> names;
  for (const auto& w : forge.pool(200, 2)) names.push_back(capitalize(w));

  LabeledCorpus corpus;
  std::vector<std::string> ids;
  for (std::size_t r = 0; r < spec.relations; ++r) {
    char id[24];
    std::snprintf(id, sizeof id, "R%03zu", r + 1);
    Tokens desc = r < train ? Tokens{words[r], words[(r + 1) % train]}
                            : Tokens{words[r - train], words[r - train + train / 2]};
    corpus.relations.emplace(id, RelationType{id, std::move(desc), false});
    corpus.splits.emplace(id, r < train ? Split::train : Split::test);
    ids.emplace_back(id);
  }

  for (const auto& id : ids) {
    const Tokens& desc = corpus.relations.at(id).description;
    for (std::size_t i = 0; i < spec.instances_per_relation; ++i) {
      Rng rng(hash_combine(hash_combine(spec.seed, fnv1a(id)), i));
      // One of three frames, head always first:
      //   "<head> <description> <tail> [filler] ."
      //   "there is <head> that <description> <tail> ."
      //   "as for <head> , <tail> <description> ."
      RelationInstance inst;
      Tokens& t = inst.tokens;
      const auto [head, tail] = pick_pair(names, rng);
      const auto mark = [&t](Span& span, const std::string& name) {
        t.push_back(name);
        span = {t.size() - 1, t.size() - 1};
      };
      switch (rng.below(3)) {
        case 0:
          mark(inst.head, head);
          t.insert(t.end(), desc.begin(), desc.end());
          mark(inst.tail, tail);
          if (rng.below(2) == 1) t.push_back(pick(fillers, rng));
          break;
        case 1:
          t.insert(t.end(), {"there", "is"});
          mark(inst.head, head);
          t.emplace_back("that");
          t.insert(t.end(), desc.begin(), desc.end());
          mark(inst.tail, tail);
          break;
        default:
          t.insert(t.end(), {"as", "for"});
          mark(inst.head, head);
          t.emplace_back(",");
          mark(inst.tail, tail);
          t.insert(t.end(), desc.begin(), desc.end());
          break;
      }
      t.emplace_back(".");
      inst.relation = id;
      corpus.instances.push_back(validate_instance(inst));
    }
  }
  return corpus;
}

std::set<std::string> description_words(const LabeledCorpus& corpus, Split split) {
  std::set<std::string> out;
  for (const auto& id : corpus.relations_in(split))
    for (const auto& w : corpus.relations.at(id).description) out.insert(lowercase(w));
  return out;
}

std::vector<Tokens> make_raw_sentences(const RawSentenceSpec& spec, const LabeledCorpus& avoid) {
  WordForge forge(hash_combine(spec.seed, fnv1a("raw-sentence-words")));
  std::set<std::string> taken;
  for (const auto& inst : avoid.instances)
    for (const auto& w : inst.tokens) taken.insert(lowercase(w));
  for (const auto& [id, rel] : avoid.relations)
    for (const auto& w : rel.description) taken.insert(lowercase(w));
  forge.reserve(taken);
  std::vector<std::string> verbs;
  for (const auto& w : forge.pool(spec.verbs, 2)) verbs.push_back(w + "ed");
  std::vector<std::string> names;
  for (const auto& w : forge.pool(spec.names, 2)) names.push_back(capitalize(w));

  std::vector<Tokens> out;
  Rng rng(hash_combine(spec.seed, fnv1a("raw-sentences")));
  for (std::size_t s = 0; s < spec.sentences; ++s) {
    const auto [subject, object] = pick_pair(names, rng);
    const auto [first, second] = pick_pair(verbs, rng);
    out.push_back({subject, first, second, object, "."});
  }
  return out;
}

}  // namespace choicematch
