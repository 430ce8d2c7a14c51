#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "choicematch/relation_core.hpp"

namespace choicematch {

using TokenId = std::int32_t;

/// Reserved ids. Their order is part of the vocabulary file format.
enum Special : TokenId {
  kCls = 0,
  kSep,
  kChoice,
  kE1Open,
  kE1Close,
  kE2Open,
  kE2Close,
  kHead,
  kRel,
  kTail,
  kPad,
  kUnk,
  kSpecialCount
};

inline constexpr std::array<std::string_view, kSpecialCount> kSpecialTokens = {
    "[CLS]", "[SEP]", "[C]", "[e1]", "[/e1]", "[e2]", "[/e2]", "[H]", "[R]", "[T]", "[PAD]", "[UNK]"};

/// Token → id map. Surface tokens are lowercased; special tokens match
/// exactly. Frozen after construction.
class Vocabulary {
 public:
  /// Specials only.
  Vocabulary();
  /// Specials followed by the sorted distinct lowercased tokens of `texts`.
  static Vocabulary build(const std::vector<Tokens>& texts);

  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  std::vector<TokenId> ids(const Tokens& tokens) const;

  void save(std::ostream& out) const;
  static Vocabulary load(std::istream& in);
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  explicit Vocabulary(std::vector<std::string> tokens);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

std::string lowercase(std::string_view s);

struct ChoicePrompt {
  Tokens tokens;
  std::vector<std::size_t> marker_positions;
};

/// Assembled encoder input: [CLS] prompt [SEP] wrapped-instance [SEP].
struct ModelInput {
  std::vector<TokenId> ids;
  std::vector<std::size_t> choice_positions;
  std::size_t e1_open = 0;
  std::size_t e1_close = 0;
  std::size_t e2_open = 0;
  std::size_t e2_close = 0;
  std::array<std::size_t, 2> sep_positions{};

  std::size_t length() const { return ids.size(); }
  std::size_t choice_count() const { return choice_positions.size(); }
  friend bool operator==(const ModelInput&, const ModelInput&) = default;
};

inline constexpr std::size_t kDefaultMaxLen = 160;

/// "[C] d1 [C] d2 ... [C] dN"; marker i precedes description i.
ChoicePrompt build_choice_prompt(const std::vector<RelationType>& choices);
ChoicePrompt build_choice_prompt(const std::vector<Tokens>& descriptions);

/// Inserts [e1] [/e1] [e2] [/e2] around the entity spans; length n + 4.
Tokens wrap_instance(const RelationInstance& inst);

/// Concatenates and maps to ids. Instance tokens after [/e2] are dropped from
/// the right to fit `max_len`; the prompt and markers are never dropped.
ModelInput assemble_input(const ChoicePrompt& prompt, const Tokens& wrapped,
                          const Vocabulary& vocab, std::size_t max_len = kDefaultMaxLen);

/// build_choice_prompt + wrap_instance + assemble_input.
ModelInput make_input(const std::vector<RelationType>& choices, const RelationInstance& inst,
                      const Vocabulary& vocab, std::size_t max_len = kDefaultMaxLen);

/// Instance tokens between the two [SEP]s with entity markers removed.
std::vector<TokenId> recover_instance_ids(const ModelInput& input);

std::string render(const ModelInput& input, const Vocabulary& vocab);

}  // namespace choicematch
