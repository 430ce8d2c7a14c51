#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "choicematch/relation_core.hpp"

namespace choicematch {

/// (subject, predicate, object) with token spans into the source sentence.
struct Triplet {
  Tokens subject;
  Tokens predicate;
  Tokens object;
  std::size_t sentence = 0;
  Span subject_span;
  Span predicate_span;
  Span object_span;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

/// A generated sentence labeled with the predicate it should match.
struct PseudoInstance {
  Tokens paraphrase;
  Tokens predicate;
  Span subject_span;  // into paraphrase
  Span object_span;
  std::size_t origin = 0;  // ordinal of the source triplet
  std::size_t template_index = 0;

  /// Entity pair in textual order (head = whichever constituent comes first).
  RelationInstance to_instance() const;
  friend bool operator==(const PseudoInstance&, const PseudoInstance&) = default;
};

/// `choices[gold[i]]` is the normalized predicate of `instances[i]`.
struct PseudoBatch {
  std::size_t id = 0;
  std::vector<PseudoInstance> instances;
  std::vector<Tokens> choices;
  std::vector<std::size_t> gold;
};

/// Coarse part-of-speech classes used by the shallow chunker.
enum class WordClass { punct, det, prep, aux, verb, noun, other };

std::vector<WordClass> classify_words(const Tokens& sentence);

/// Rule-based extraction: every NP VP NP chunk window yields a triplet.
/// NPs are an optional determiner followed by noun-like tokens; VPs are
/// auxiliaries/verbs followed by any prepositions or particles.
std::vector<Triplet> extract_triplets(const Tokens& sentence, std::size_t sentence_id = 0);

/// "[H] subject [R] predicate [T] object"
Tokens wrap_triplet(const Triplet& t);

/// Inverse of wrap_triplet; throws MalformedWrapError.
Triplet unwrap_triplet(const Tokens& wrapped);

inline constexpr std::size_t kTemplateCount = 2;

/// Template 0: "as for <object> , <subject> <predicate> ."
/// Template 1: "there is <subject> that <predicate> <object> ."
/// Output is lowercased. Throws MalformedWrapError if the wrap is malformed or
/// a constituent does not occur exactly once in the result.
PseudoInstance generate_paraphrase(const Tokens& wrapped, std::size_t template_index);

/// Lowercase, single-space joined.
std::string normalize_predicate(const Tokens& predicate);

// Pluggable backends. The defaults are deterministic and in-process; the
// command adapters exchange JSONL with an external program.
class TripletExtractor {
 public:
  virtual ~TripletExtractor() = default;
  virtual std::vector<std::vector<Triplet>> extract(const std::vector<Tokens>& sentences) const = 0;
};

class ParaphraseGenerator {
 public:
  virtual ~ParaphraseGenerator() = default;
  /// One paraphrase per wrapped triplet; `ordinal` is the triplet's position
  /// in the stream.
  virtual PseudoInstance generate(const Tokens& wrapped, std::size_t ordinal) const = 0;
};

class RuleBasedExtractor final : public TripletExtractor {
 public:
  std::vector<std::vector<Triplet>> extract(const std::vector<Tokens>& sentences) const override;
};

/// Round-robin over the built-in templates.
class TemplateParaphraser final : public ParaphraseGenerator {
 public:
  PseudoInstance generate(const Tokens& wrapped, std::size_t ordinal) const override;
};

/// Runs `command` with sentences on stdin (one per line) and reads JSONL
/// lines {"sentence": i, "subject": [...], "predicate": [...], "object": [...]}.
class CommandExtractor final : public TripletExtractor {
 public:
  explicit CommandExtractor(std::string command) : command_(std::move(command)) {}
  std::vector<std::vector<Triplet>> extract(const std::vector<Tokens>& sentences) const override;

 private:
  std::string command_;
};

struct PretrainCorpusConfig {
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  std::size_t max_predicate_tokens = 6;
};

/// Paraphrases every extracted triplet, shuffles the stream and packs batches
/// of distinct predicates. Instances that cannot complete a batch are dropped.
std::vector<PseudoBatch> build_pretraining_corpus(
    const std::vector<Tokens>& sentences, const PretrainCorpusConfig& config,
    const TripletExtractor& extractor = RuleBasedExtractor(),
    const ParaphraseGenerator& generator = TemplateParaphraser());

/// JSONL: paraphrase, predicate, subj_span, obj_span (1-based), batch_id, choices.
void write_pseudo_corpus(const std::vector<PseudoBatch>& batches, std::ostream& out);
std::vector<PseudoBatch> read_pseudo_corpus(std::istream& in);

/// One sentence per line, whitespace tokenized; blank lines skipped.
std::vector<Tokens> read_sentences(std::istream& in);

}  // namespace choicematch
