#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace choicematch {

using Tokens = std::vector<std::string>;

/// Inclusive token span, 0-based.
struct Span {
  std::size_t first = 0;
  std::size_t last = 0;

  std::size_t size() const { return last - first + 1; }
  friend bool operator==(const Span&, const Span&) = default;
};

/// A sentence with a marked entity pair. The head span always precedes the
/// tail span and the two never overlap.
struct RelationInstance {
  Tokens tokens;
  Span head;
  Span tail;
  std::optional<std::string> relation;

  friend bool operator==(const RelationInstance&, const RelationInstance&) = default;
};

/// A candidate relation and the text shown for it in the choice prompt.
struct RelationType {
  std::string id;
  Tokens description;
  bool is_nota = false;

  friend bool operator==(const RelationType&, const RelationType&) = default;
};

inline constexpr std::string_view kNotaId = "NOTA";

/// The none-of-the-above choice appended last when NOTA is enabled.
RelationType nota_relation();

enum class Split { train, validation, test };

std::string_view split_name(Split s);
Split parse_split(std::string_view s);

struct LabeledCorpus {
  std::vector<RelationInstance> instances;
  std::map<std::string, RelationType> relations;
  std::map<std::string, Split> splits;

  /// Relation ids tagged with `split`, in id order.
  std::vector<std::string> relations_in(Split split) const;
  /// Instance indices grouped by relation id, in corpus order.
  std::map<std::string, std::vector<std::size_t>> index_by_relation() const;

  friend bool operator==(const LabeledCorpus&, const LabeledCorpus&) = default;
};

/// One N-way K-shot task. `choices` lists the N sampled relations in prompt
/// order, followed by the NOTA choice when nota_rate > 0. NOTA queries carry
/// relation id kNotaId.
struct Episode {
  std::map<std::string, std::vector<RelationInstance>> support;
  std::vector<RelationInstance> queries;
  std::vector<RelationType> choices;
  double nota_rate = 0.0;
  std::uint64_t seed = 0;
  std::size_t way = 0;
  std::size_t shot = 0;

  // Corpus indices the instances were drawn from.
  std::map<std::string, std::vector<std::size_t>> support_origin;
  std::vector<std::size_t> query_origin;

  /// Index into `choices` of a relation id; throws IndexError if absent.
  std::size_t choice_index(const std::string& relation_id) const;
  bool has_nota() const { return !choices.empty() && choices.back().is_nota; }

  friend bool operator==(const Episode&, const Episode&) = default;
};

/// Returns `inst` unchanged when its invariants hold, throws otherwise.
const RelationInstance& validate_instance(const RelationInstance& inst);

/// round(rate * count), half away from zero.
std::size_t nota_query_count(double nota_rate, std::size_t query_count);

struct EpisodeSpec {
  std::size_t way = 5;
  std::size_t shot = 1;
  std::size_t queries = 10;
  double nota_rate = 0.0;
};

/// Samples an episode from the relations of `split`. Sampling ranks relations
/// and instances by a keyed hash of (seed, relation id, instance ordinal), so
/// the result depends only on the relations that end up in the episode.
Episode sample_episode(const LabeledCorpus& corpus, Split split,
                       const EpisodeSpec& spec, std::uint64_t seed);

/// Throws InvariantError naming the first violated Episode invariant.
void check_episode(const Episode& episode, const EpisodeSpec& spec);

// Corpus JSONL (one instance per line, 1-based inclusive spans) and the
// relation catalog JSON. With no catalog, relations are synthesized from the
// ids found in the corpus (description = id with '_' as spaces, split train).
LabeledCorpus parse_corpus(std::istream& corpus_jsonl, std::istream* catalog_json);
LabeledCorpus read_corpus(const std::string& corpus_path,
                          const std::optional<std::string>& catalog_path = std::nullopt);
void write_corpus_jsonl(const LabeledCorpus& corpus, std::ostream& out);
void write_catalog_json(const LabeledCorpus& corpus, std::ostream& out);
void write_corpus(const LabeledCorpus& corpus, const std::string& corpus_path,
                  const std::optional<std::string>& catalog_path = std::nullopt);

/// Whitespace tokenizer shared by every text input.
Tokens split_whitespace(std::string_view text);
std::string join_tokens(const Tokens& tokens, std::string_view sep = " ");

}  // namespace choicematch
