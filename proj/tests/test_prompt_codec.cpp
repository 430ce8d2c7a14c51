#include <sstream>

#include "choicematch/errors.hpp"
#include "choicematch/prompt_codec.hpp"
#include "choicematch/random.hpp"
#include "doctest.h"

using namespace choicematch;

namespace {

RelationInstance tim_cook(bool short_tail = false) {
  if (short_tail) return {split_whitespace("Tim Cook is the CEO of Apple ."), {0, 1}, {6, 6}, {}};
  return {split_whitespace("Tim Cook is the CEO of Apple Inc ."), {0, 1}, {6, 7}, {}};
}

std::vector<RelationType> figure_choices() {
  return {{"employee_of", {"employee", "of"}, false},
          {"ceo_of", {"ceo", "of"}, false},
          {"NOTA", {"others"}, true}};
}

Vocabulary vocab_for(const std::vector<Tokens>& texts) { return Vocabulary::build(texts); }

}  // namespace

TEST_CASE("special tokens have fixed low ids") {
  const Vocabulary v;
  CHECK(v.size() == kSpecialCount);
  for (std::size_t i = 0; i < kSpecialTokens.size(); ++i)
    CHECK(v.id(kSpecialTokens[i]) == static_cast<TokenId>(i));
  CHECK(v.id("never-seen") == kUnk);
}

TEST_CASE("vocabulary lowercases and round-trips") {
  const auto v = vocab_for({{"Apple", "apple", "Banana"}});
  CHECK(v.size() == kSpecialCount + 2);
  CHECK(v.id("APPLE") == v.id("apple"));
  std::stringstream ss;
  v.save(ss);
  CHECK(Vocabulary::load(ss) == v);
}

TEST_CASE("choice prompt layout") {
  const auto p = build_choice_prompt(figure_choices());
  CHECK(join_tokens(p.tokens) == "[C] employee of [C] ceo of [C] others");
  CHECK(p.marker_positions == std::vector<std::size_t>{0, 3, 6});
  const auto one = build_choice_prompt(std::vector<Tokens>{{"r"}});
  CHECK(join_tokens(one.tokens) == "[C] r");
  CHECK(one.marker_positions == std::vector<std::size_t>{0});
  CHECK_THROWS_AS(build_choice_prompt(std::vector<Tokens>{}), EmptyChoicesError);

  auto perm = figure_choices();
  std::swap(perm[0], perm[2]);
  const auto q = build_choice_prompt(perm);
  CHECK(join_tokens(q.tokens) == "[C] others [C] ceo of [C] employee of");
  CHECK(q.marker_positions.size() == 3);
}

TEST_CASE("instance wrapping") {
  CHECK(join_tokens(wrap_instance(tim_cook())) == "[e1] Tim Cook [/e1] is the CEO of [e2] Apple Inc [/e2] .");
  const auto w = wrap_instance({{"t1", "t2"}, {0, 0}, {1, 1}, {}});
  CHECK(join_tokens(w) == "[e1] t1 [/e1] [e2] t2 [/e2]");
  CHECK(w.size() == 6);
}

TEST_CASE("assembled input for the worked example") {
  const auto inst = tim_cook(true);
  const auto v = vocab_for({inst.tokens, {"employee", "of", "ceo", "others"}});
  const auto in = make_input(figure_choices(), inst, v);
  CHECK(render(in, v) ==
        "[CLS] [C] employee of [C] ceo of [C] others [SEP] [e1] tim cook [/e1] is the ceo of [e2] apple "
        "[/e2] . [SEP]");
  const auto one = make_input({{"r", {"r"}, false}}, {{"a", "b"}, {0, 0}, {1, 1}, {}}, vocab_for({{"r", "a", "b"}}));
  CHECK(one.length() == 11);
}

TEST_CASE("stored positions equal an independent scan on random inputs") {
  Tokens words;
  for (int i = 0; i < 30; ++i) words.push_back("w" + std::to_string(i));
  const auto v = vocab_for({words});
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n_choices = 1 + rng.below(6);
    std::vector<Tokens> descs(n_choices);
    for (auto& d : descs)
      for (std::size_t k = 0, len = 1 + rng.below(4); k < len; ++k) d.push_back(words[rng.below(30)]);
    const std::size_t n = 2 + rng.below(20);
    RelationInstance inst;
    for (std::size_t k = 0; k < n; ++k) inst.tokens.push_back(words[rng.below(30)]);
    const std::size_t i = rng.below(n - 1);
    const std::size_t j = i + rng.below(n - 1 - i);
    const std::size_t k = j + 1 + rng.below(n - j - 1);
    const std::size_t l = k + rng.below(n - k);
    inst.head = {i, j};
    inst.tail = {k, l};
    const std::size_t max_len = 24 + rng.below(60);
    ModelInput in;
    try {
      in = assemble_input(build_choice_prompt(descs), wrap_instance(inst), v, max_len);
    } catch (const Error&) {
      continue;  // too long even after truncation
    }
    std::vector<std::size_t> choices, seps;
    std::size_t e1o = 0, e1c = 0, e2o = 0, e2c = 0;
    for (std::size_t p = 0; p < in.ids.size(); ++p) {
      switch (in.ids[p]) {
        case kChoice: choices.push_back(p); break;
        case kSep: seps.push_back(p); break;
        case kE1Open: e1o = p; break;
        case kE1Close: e1c = p; break;
        case kE2Open: e2o = p; break;
        case kE2Close: e2c = p; break;
        default: break;
      }
    }
    CHECK(in.ids[0] == kCls);
    CHECK(in.length() <= max_len);
    CHECK(choices == in.choice_positions);
    CHECK(choices.size() == n_choices);
    REQUIRE(seps.size() == 2);
    CHECK(seps[0] == in.sep_positions[0]);
    CHECK(seps[1] == in.ids.size() - 1);
    CHECK(choices.back() < seps[0]);
    CHECK((seps[0] < e1o && e1o < e1c && e1c < e2o && e2o < e2c));
    CHECK((e1o == in.e1_open && e1c == in.e1_close && e2o == in.e2_open && e2c == in.e2_close));
    // Reversibility: untruncated instances come back whole.
    if (in.length() < max_len || e2c + 2 == in.length()) {
      const auto back = recover_instance_ids(in);
      const auto want = v.ids(inst.tokens);
      REQUIRE(back.size() <= want.size());
      CHECK(std::equal(back.begin(), back.end(), want.begin()));
    }
  }
}

TEST_CASE("truncation drops instance tokens after the tail, never markers") {
  RelationInstance inst{{"a", "b", "c", "d", "e", "f", "g"}, {0, 0}, {1, 1}, {}};
  const auto v = vocab_for({inst.tokens, {"r"}});
  const auto prompt = build_choice_prompt(std::vector<Tokens>{{"r"}});
  const auto full = assemble_input(prompt, wrap_instance(inst), v, 100);
  CHECK(full.length() == 3 + 1 + 11 + 1);
  const auto cut = assemble_input(prompt, wrap_instance(inst), v, 12);
  CHECK(cut.length() == 12);
  CHECK(cut.ids.back() == kSep);
  CHECK(cut.ids[cut.e2_close] == kE2Close);
  CHECK_THROWS_AS(assemble_input(prompt, wrap_instance(inst), v, 10), MarkerLossError);
  CHECK_THROWS_AS(assemble_input(prompt, wrap_instance(inst), v, 4), PromptTooLongError);
}
