#include "choicematch/prompt_codec.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include "choicematch/errors.hpp"

namespace choicematch {

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> surface) {
  tokens_.reserve(kSpecialCount + surface.size());
  for (auto s : kSpecialTokens) tokens_.emplace_back(s);
  for (auto& s : surface) tokens_.push_back(std::move(s));
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second)
      throw InvariantError("vocabulary token '" + tokens_[i] + "' appears twice");
  }
}

Vocabulary Vocabulary::build(const std::vector<Tokens>& texts) {
  std::set<std::string> seen;
  for (const auto& text : texts)
    for (const auto& t : text) {
      auto low = lowercase(t);
      if (std::find(kSpecialTokens.begin(), kSpecialTokens.end(), t) != kSpecialTokens.end())
        continue;
      if (std::find(kSpecialTokens.begin(), kSpecialTokens.end(), low) != kSpecialTokens.end())
        continue;
      seen.insert(std::move(low));
    }
  return Vocabulary(std::vector<std::string>(seen.begin(), seen.end()));
}

TokenId Vocabulary::id(std::string_view token) const {
  for (std::size_t i = 0; i < kSpecialTokens.size(); ++i)
    if (token == kSpecialTokens[i]) return static_cast<TokenId>(i);
  auto it = index_.find(lowercase(token));
  return it == index_.end() ? kUnk : it->second;
}

std::vector<TokenId> Vocabulary::ids(const Tokens& tokens) const {
  std::vector<TokenId> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

void Vocabulary::save(std::ostream& out) const {
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (lines.size() < kSpecialCount)
    throw ParseError("vocabulary lists fewer than the reserved tokens", lines.size());
  for (std::size_t i = 0; i < kSpecialCount; ++i)
    if (lines[i] != kSpecialTokens[i])
      throw ParseError("expected reserved token " + std::string(kSpecialTokens[i]), i + 1);
  return Vocabulary(std::vector<std::string>(lines.begin() + kSpecialCount, lines.end()));
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write vocabulary '" + path + "'");
  save(out);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open vocabulary '" + path + "'");
  return load(in);
}

ChoicePrompt build_choice_prompt(const std::vector<Tokens>& descriptions) {
  if (descriptions.empty()) throw EmptyChoicesError("choice prompt needs at least one choice");
  ChoicePrompt p;
  for (const auto& d : descriptions) {
    if (d.empty()) throw EmptyChoicesError("choice description is empty");
    p.marker_positions.push_back(p.tokens.size());
    p.tokens.emplace_back(kSpecialTokens[kChoice]);
    p.tokens.insert(p.tokens.end(), d.begin(), d.end());
  }
  return p;
}

ChoicePrompt build_choice_prompt(const std::vector<RelationType>& choices) {
  std::vector<Tokens> descriptions;
  descriptions.reserve(choices.size());
  for (const auto& c : choices) descriptions.push_back(c.description);
  return build_choice_prompt(descriptions);
}

Tokens wrap_instance(const RelationInstance& inst) {
  validate_instance(inst);
  Tokens out;
  out.reserve(inst.tokens.size() + 4);
  for (std::size_t i = 0; i < inst.tokens.size(); ++i) {
    if (i == inst.head.first) out.emplace_back(kSpecialTokens[kE1Open]);
    if (i == inst.tail.first) out.emplace_back(kSpecialTokens[kE2Open]);
    out.push_back(inst.tokens[i]);
    if (i == inst.head.last) out.emplace_back(kSpecialTokens[kE1Close]);
    if (i == inst.tail.last) out.emplace_back(kSpecialTokens[kE2Close]);
  }
  return out;
}

ModelInput assemble_input(const ChoicePrompt& prompt, const Tokens& wrapped,
                          const Vocabulary& vocab, std::size_t max_len) {
  if (prompt.tokens.size() + 3 > max_len)
    throw PromptTooLongError("prompt of " + std::to_string(prompt.tokens.size()) +
                             " tokens does not fit max_len " + std::to_string(max_len));

  std::vector<TokenId> inst = vocab.ids(wrapped);
  const std::size_t budget = max_len - prompt.tokens.size() - 3;
  auto last_marker = std::find(inst.rbegin(), inst.rend(), TokenId{kE2Close});
  if (last_marker == inst.rend()) throw MarkerLossError("wrapped instance lacks [/e2]");
  const std::size_t keep_min = static_cast<std::size_t>(inst.rend() - last_marker);
  if (inst.size() > budget) {
    if (keep_min > budget)
      throw MarkerLossError("truncating the instance to " + std::to_string(budget) +
                            " tokens would drop an entity marker");
    inst.resize(budget);
  }

  ModelInput in;
  in.ids.reserve(prompt.tokens.size() + inst.size() + 3);
  in.ids.push_back(kCls);
  for (const auto& t : prompt.tokens) in.ids.push_back(vocab.id(t));
  in.sep_positions[0] = in.ids.size();
  in.ids.push_back(kSep);
  in.ids.insert(in.ids.end(), inst.begin(), inst.end());
  in.sep_positions[1] = in.ids.size();
  in.ids.push_back(kSep);

  int seen[kSpecialCount] = {};
  for (std::size_t i = 0; i < in.ids.size(); ++i) {
    const TokenId t = in.ids[i];
    if (t < 0 || t >= kSpecialCount) continue;
    ++seen[t];
    switch (t) {
      case kChoice:
        if (i > in.sep_positions[0]) throw InvariantError("[C] marker inside the instance");
        in.choice_positions.push_back(i);
        break;
      case kE1Open: in.e1_open = i; break;
      case kE1Close: in.e1_close = i; break;
      case kE2Open: in.e2_open = i; break;
      case kE2Close: in.e2_close = i; break;
      default: break;
    }
  }
  if (in.choice_positions.size() != prompt.marker_positions.size())
    throw InvariantError("prompt marker count mismatch");
  for (TokenId m : {kE1Open, kE1Close, kE2Open, kE2Close})
    if (seen[m] != 1) throw MarkerLossError("entity marker " + std::string(kSpecialTokens[m]) +
                                            " must appear exactly once");
  if (seen[kSep] != 2 || seen[kCls] != 1) throw InvariantError("stray [SEP] or [CLS] token");
  if (!(in.sep_positions[0] < in.e1_open && in.e1_open < in.e1_close &&
        in.e1_close < in.e2_open && in.e2_open < in.e2_close))
    throw InvariantError("entity markers out of order");
  return in;
}

ModelInput make_input(const std::vector<RelationType>& choices, const RelationInstance& inst,
                      const Vocabulary& vocab, std::size_t max_len) {
  return assemble_input(build_choice_prompt(choices), wrap_instance(inst), vocab, max_len);
}

std::vector<TokenId> recover_instance_ids(const ModelInput& input) {
  std::vector<TokenId> out;
  for (std::size_t i = input.sep_positions[0] + 1; i < input.sep_positions[1]; ++i) {
    const TokenId t = input.ids[i];
    if (t == kE1Open || t == kE1Close || t == kE2Open || t == kE2Close) continue;
    out.push_back(t);
  }
  return out;
}

std::string render(const ModelInput& input, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < input.ids.size(); ++i) {
    if (i) out += ' ';
    out += vocab.token(input.ids[i]);
  }
  return out;
}

}  // namespace choicematch
