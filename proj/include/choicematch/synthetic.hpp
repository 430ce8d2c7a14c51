#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "choicematch/relation_core.hpp"

namespace choicematch {

/// Template-generated relation corpus. Every relation is described by two
/// pseudo-words that also occur in each of its instance sentences. Sentences
/// use three frames, two of which read like the paraphrase templates. Test
/// relations pair up training words in new combinations.
struct RelationCorpusSpec {
  std::size_t relations = 50;
  std::size_t train_relations = 40;  // the rest go to the test split
  std::size_t instances_per_relation = 100;
  std::uint64_t seed = 2024;
};

LabeledCorpus make_relation_corpus(const RelationCorpusSpec& spec);

/// Raw declarative sentences "<Name> <verb>ed <verb>ed <Name> ." for building
/// a pseudo-labeled pre-training corpus. Words are drawn from pools disjoint
/// from every word of `avoid`.
struct RawSentenceSpec {
  std::size_t sentences = 10000;
  std::size_t verbs = 300;
  std::size_t names = 200;
  std::uint64_t seed = 2024;
};

std::vector<Tokens> make_raw_sentences(const RawSentenceSpec& spec, const LabeledCorpus& avoid);

/// Lowercased description words of every relation in `corpus` tagged `split`.
std::set<std::string> description_words(const LabeledCorpus& corpus, Split split);

}  // namespace choicematch
