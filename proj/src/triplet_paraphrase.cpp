#include "choicematch/triplet_paraphrase.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <string_view>
#include <unistd.h>

#include "choicematch/errors.hpp"
#include "choicematch/prompt_codec.hpp"
#include "choicematch/random.hpp"
#include "json.hpp"

namespace choicematch {

namespace {

const std::set<std::string, std::less<>> kDeterminers = {
    "the", "a", "an", "its", "his", "her", "their", "this", "these", "those", "our", "my", "your"};
const std::set<std::string, std::less<>> kPrepositions = {
    "to",   "of",    "in",    "on",     "at",     "for",     "with", "by",
    "from", "into",  "about", "as",     "over",   "under",   "after", "before",
    "during", "through", "near", "than", "via", "onto", "upon", "within", "without"};
const std::set<std::string, std::less<>> kAuxiliaries = {
    "is",    "was", "are", "were",  "be",    "been", "being",  "has",   "had", "have",
    "will",  "would", "can", "could", "may", "might", "shall", "should", "does", "did", "do"};
const std::set<std::string, std::less<>> kFunctionWords = {
    "and", "or", "but", "which", "who", "whom", "whose", "that", "not", "also", "it", "he",
    "she", "they", "we", "i", "you", "there", "where", "when", "while", "if", "because"};
const std::set<std::string, std::less<>> kVerbs = {
    "known",   "called",  "named",   "founded", "born",    "located",  "based",   "made",
    "built",   "written", "taken",   "given",   "held",    "led",      "won",     "became",
    "become",  "began",   "begun",   "found",   "grown",   "sold",     "bought",  "taught",
    "joined",  "owns",    "leads",   "runs",    "makes",   "plays",    "holds",   "wrote",
    "made",    "left",    "met",     "ran",     "saw",     "took",     "gave",    "built",
    "includes", "contains", "produces", "serves", "traces", "marries", "married", "studies",
    "studied", "lives",   "works",   "worked",  "lived",   "directed", "directs", "hosts",
    "hosted",  "released", "releases", "created", "creates", "owned", "operates", "operated"};

bool is_punct(std::string_view t) {
  return std::none_of(t.begin(), t.end(), [](unsigned char c) { return std::isalnum(c); });
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

bool looks_like_verb(std::string_view low, WordClass previous) {
  if (low.size() > 3 && ends_with(low, "ed")) return true;
  if (low.size() > 3 && previous == WordClass::noun && ends_with(low, "s") &&
      !ends_with(low, "ss") && !ends_with(low, "us") && !ends_with(low, "is"))
    return true;
  return false;
}

enum class Chunk { np, vp, prep, punct, other };

struct ChunkSpan {
  Chunk kind;
  std::size_t first;
  std::size_t last;
};

std::vector<ChunkSpan> chunk(const std::vector<WordClass>& cls) {
  std::vector<ChunkSpan> out;
  std::size_t i = 0;
  const std::size_t n = cls.size();
  while (i < n) {
    const std::size_t start = i;
    if (cls[i] == WordClass::det || cls[i] == WordClass::noun) {
      if (cls[i] == WordClass::det) ++i;
      const std::size_t nouns = i;
      while (i < n && cls[i] == WordClass::noun) ++i;
      if (i > nouns) {
        out.push_back({Chunk::np, start, i - 1});
      } else {
        out.push_back({Chunk::other, start, start});
      }
      continue;
    }
    if (cls[i] == WordClass::aux || cls[i] == WordClass::verb) {
      while (i < n && (cls[i] == WordClass::aux || cls[i] == WordClass::verb)) ++i;
      while (i < n && cls[i] == WordClass::prep) ++i;
      out.push_back({Chunk::vp, start, i - 1});
      continue;
    }
    const Chunk kind = cls[i] == WordClass::prep    ? Chunk::prep
                       : cls[i] == WordClass::punct ? Chunk::punct
                                                    : Chunk::other;
    out.push_back({kind, i, i});
    ++i;
  }
  return out;
}

Tokens slice(const Tokens& t, Span s) {
  return Tokens(t.begin() + static_cast<std::ptrdiff_t>(s.first),
                t.begin() + static_cast<std::ptrdiff_t>(s.last) + 1);
}

Tokens lower_all(const Tokens& t) {
  Tokens out;
  out.reserve(t.size());
  for (const auto& s : t) out.push_back(lowercase(s));
  return out;
}

std::vector<std::size_t> occurrences(const Tokens& hay, const Tokens& needle) {
  std::vector<std::size_t> out;
  if (needle.empty() || needle.size() > hay.size()) return out;
  for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i)
    if (std::equal(needle.begin(), needle.end(), hay.begin() + static_cast<std::ptrdiff_t>(i)))
      out.push_back(i);
  return out;
}

}  // namespace

RelationInstance PseudoInstance::to_instance() const {
  RelationInstance inst;
  inst.tokens = paraphrase;
  if (subject_span.first < object_span.first) {
    inst.head = subject_span;
    inst.tail = object_span;
  } else {
    inst.head = object_span;
    inst.tail = subject_span;
  }
  inst.relation = normalize_predicate(predicate);
  return inst;
}

std::vector<WordClass> classify_words(const Tokens& sentence) {
  std::vector<WordClass> out;
  out.reserve(sentence.size());
  WordClass prev = WordClass::other;
  for (const auto& tok : sentence) {
    const std::string low = lowercase(tok);
    WordClass c;
    if (is_punct(tok)) {
      c = WordClass::punct;
    } else if (kDeterminers.count(low)) {
      c = WordClass::det;
    } else if (kPrepositions.count(low)) {
      c = WordClass::prep;
    } else if (kAuxiliaries.count(low)) {
      c = WordClass::aux;
    } else if (kFunctionWords.count(low)) {
      c = WordClass::other;
    } else if (kVerbs.count(low)) {
      c = WordClass::verb;
    } else if (prev == WordClass::det || std::isupper(static_cast<unsigned char>(tok[0]))) {
      c = WordClass::noun;
    } else if (looks_like_verb(low, prev)) {
      c = WordClass::verb;
    } else {
      c = WordClass::noun;
    }
    out.push_back(c);
    prev = c;
  }
  return out;
}

std::vector<Triplet> extract_triplets(const Tokens& sentence, std::size_t sentence_id) {
  if (sentence.empty()) throw EmptyTokensError("cannot extract triplets from an empty sentence");
  const auto chunks = chunk(classify_words(sentence));
  std::vector<Triplet> out;
  for (std::size_t c = 0; c + 2 < chunks.size(); ++c) {
    if (chunks[c].kind != Chunk::np || chunks[c + 1].kind != Chunk::vp ||
        chunks[c + 2].kind != Chunk::np)
      continue;
    Triplet t;
    t.sentence = sentence_id;
    t.subject_span = {chunks[c].first, chunks[c].last};
    t.predicate_span = {chunks[c + 1].first, chunks[c + 1].last};
    t.object_span = {chunks[c + 2].first, chunks[c + 2].last};
    t.subject = slice(sentence, t.subject_span);
    t.predicate = slice(sentence, t.predicate_span);
    t.object = slice(sentence, t.object_span);
    out.push_back(std::move(t));
  }
  return out;
}

Tokens wrap_triplet(const Triplet& t) {
  Tokens out;
  out.reserve(t.subject.size() + t.predicate.size() + t.object.size() + 3);
  out.emplace_back(kSpecialTokens[kHead]);
  out.insert(out.end(), t.subject.begin(), t.subject.end());
  out.emplace_back(kSpecialTokens[kRel]);
  out.insert(out.end(), t.predicate.begin(), t.predicate.end());
  out.emplace_back(kSpecialTokens[kTail]);
  out.insert(out.end(), t.object.begin(), t.object.end());
  return out;
}

Triplet unwrap_triplet(const Tokens& wrapped) {
  const auto find = [&](Special s) {
    return std::find(wrapped.begin(), wrapped.end(), kSpecialTokens[s]);
  };
  const auto h = find(kHead);
  const auto r = find(kRel);
  const auto t = find(kTail);
  if (h != wrapped.begin() || r == wrapped.end() || t == wrapped.end() || !(h < r && r < t))
    throw MalformedWrapError("expected '[H] subject [R] predicate [T] object'");
  for (Special s : {kHead, kRel, kTail})
    if (std::count(wrapped.begin(), wrapped.end(), kSpecialTokens[s]) != 1)
      throw MalformedWrapError("triplet marker repeated");
  Triplet out;
  out.subject.assign(h + 1, r);
  out.predicate.assign(r + 1, t);
  out.object.assign(t + 1, wrapped.end());
  if (out.subject.empty() || out.predicate.empty() || out.object.empty())
    throw MalformedWrapError("triplet constituent is empty");
  return out;
}

PseudoInstance generate_paraphrase(const Tokens& wrapped, std::size_t template_index) {
  const Triplet t = unwrap_triplet(wrapped);
  const Tokens subj = lower_all(t.subject);
  const Tokens pred = lower_all(t.predicate);
  const Tokens obj = lower_all(t.object);

  PseudoInstance p;
  p.predicate = pred;
  p.template_index = template_index % kTemplateCount;
  auto append = [&](const Tokens& part) { p.paraphrase.insert(p.paraphrase.end(), part.begin(), part.end()); };
  if (p.template_index == 0) {
    append({"as", "for"});
    append(obj);
    append({","});
    append(subj);
    append(pred);
    append({"."});
  } else {
    append({"there", "is"});
    append(subj);
    append({"that"});
    append(pred);
    append(obj);
    append({"."});
  }

  const auto subj_at = occurrences(p.paraphrase, subj);
  const auto obj_at = occurrences(p.paraphrase, obj);
  if (subj_at.size() != 1 || obj_at.size() != 1)
    throw MalformedWrapError("subject or object does not occur exactly once in the paraphrase");
  p.subject_span = {subj_at[0], subj_at[0] + subj.size() - 1};
  p.object_span = {obj_at[0], obj_at[0] + obj.size() - 1};
  const Span& a = p.subject_span.first < p.object_span.first ? p.subject_span : p.object_span;
  const Span& b = p.subject_span.first < p.object_span.first ? p.object_span : p.subject_span;
  if (a.last >= b.first) throw MalformedWrapError("subject and object overlap in the paraphrase");
  return p;
}

std::string normalize_predicate(const Tokens& predicate) {
  std::string out;
  for (const auto& tok : predicate)
    for (const auto& piece : split_whitespace(tok)) {
      if (!out.empty()) out += ' ';
      out += lowercase(piece);
    }
  return out;
}

std::vector<std::vector<Triplet>> RuleBasedExtractor::extract(
    const std::vector<Tokens>& sentences) const {
  std::vector<std::vector<Triplet>> out(sentences.size());
  const auto n = static_cast<std::ptrdiff_t>(sentences.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (!sentences[k].empty()) out[k] = extract_triplets(sentences[k], k);
  }
  return out;
}

PseudoInstance TemplateParaphraser::generate(const Tokens& wrapped, std::size_t ordinal) const {
  PseudoInstance p = generate_paraphrase(wrapped, ordinal % kTemplateCount);
  p.origin = ordinal;
  return p;
}

std::vector<std::vector<Triplet>> CommandExtractor::extract(
    const std::vector<Tokens>& sentences) const {
  char path[] = "/tmp/choicematch-sentences-XXXXXX";
  const int fd = mkstemp(path);
  if (fd < 0) throw Error("cannot create a temporary file for the extractor");
  close(fd);
  {
    std::ofstream out(path);
    for (const auto& s : sentences) out << join_tokens(s) << '\n';
  }
  const std::string cmd = command_ + " < " + path;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) {
    std::remove(path);
    throw Error("cannot run extractor command '" + command_ + "'");
  }
  std::string text;
  char buf[4096];
  std::size_t got;
  while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) text.append(buf, got);
  const int status = pclose(pipe);
  std::remove(path);
  if (status != 0) throw Error("extractor command '" + command_ + "' failed");

  std::vector<std::vector<Triplet>> out(sentences.size());
  std::size_t lineno = 0;
  for (const auto& line : [&] {
         std::vector<std::string> lines;
         std::size_t start = 0;
         while (start < text.size()) {
           auto end = text.find('\n', start);
           if (end == std::string::npos) end = text.size();
           lines.push_back(text.substr(start, end - start));
           start = end + 1;
         }
         return lines;
       }()) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json v;
    try {
      v = nlohmann::json::parse(line);
      Triplet t;
      t.sentence = v.at("sentence").get<std::size_t>();
      t.subject = v.at("subject").get<Tokens>();
      t.predicate = v.at("predicate").get<Tokens>();
      t.object = v.at("object").get<Tokens>();
      if (t.sentence >= sentences.size() || t.subject.empty() || t.predicate.empty() ||
          t.object.empty())
        throw ParseError("triplet refers to an unknown sentence or has an empty part", lineno);
      out[t.sentence].push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return out;
}

std::vector<PseudoBatch> build_pretraining_corpus(const std::vector<Tokens>& sentences,
                                                  const PretrainCorpusConfig& config,
                                                  const TripletExtractor& extractor,
                                                  const ParaphraseGenerator& generator) {
  if (sentences.empty()) throw EmptyTokensError("pre-training corpus needs input sentences");
  if (config.batch_size == 0) throw ConfigError("batch size must be positive");

  const auto triplets = extractor.extract(sentences);
  std::vector<PseudoInstance> stream;
  std::size_t ordinal = 0;
  for (std::size_t s = 0; s < triplets.size(); ++s) {
    for (const auto& t : triplets[s]) {
      if (t.predicate.size() > config.max_predicate_tokens) continue;
      PseudoInstance p;
      try {
        p = generator.generate(wrap_triplet(t), ordinal);
      } catch (const MalformedWrapError&) {
        continue;
      }
      ++ordinal;
      if (lower_all(p.paraphrase) == lower_all(sentences[s])) continue;
      stream.push_back(std::move(p));
    }
  }

  std::set<std::string> distinct;
  for (const auto& p : stream) distinct.insert(normalize_predicate(p.predicate));
  if (distinct.size() < config.batch_size)
    throw InsufficientDistinctPredicatesError(
        "found " + std::to_string(distinct.size()) + " distinct predicates, batch size is " +
        std::to_string(config.batch_size));

  Rng rng(hash_combine(config.seed, 0x707265747261696eULL));
  shuffle(stream, rng);

  std::vector<PseudoBatch> batches;
  std::vector<PseudoInstance> remaining = std::move(stream);
  while (remaining.size() >= config.batch_size) {
    PseudoBatch batch;
    batch.id = batches.size();
    std::set<std::string> used;
    std::vector<PseudoInstance> rest;
    rest.reserve(remaining.size());
    for (auto& p : remaining) {
      const auto key = normalize_predicate(p.predicate);
      if (batch.instances.size() < config.batch_size && used.insert(key).second) {
        batch.gold.push_back(batch.choices.size());
        batch.choices.push_back(split_whitespace(key));
        batch.instances.push_back(std::move(p));
      } else {
        rest.push_back(std::move(p));
      }
    }
    if (batch.instances.size() < config.batch_size) break;
    batches.push_back(std::move(batch));
    remaining = std::move(rest);
  }
  return batches;
}

void write_pseudo_corpus(const std::vector<PseudoBatch>& batches, std::ostream& out) {
  for (const auto& b : batches) {
    std::vector<std::string> choices;
    for (const auto& c : b.choices) choices.push_back(join_tokens(c));
    for (const auto& p : b.instances) {
      nlohmann::ordered_json v;
      v["paraphrase"] = p.paraphrase;
      v["predicate"] = p.predicate;
      v["subj_span"] = {p.subject_span.first + 1, p.subject_span.last + 1};
      v["obj_span"] = {p.object_span.first + 1, p.object_span.last + 1};
      v["batch_id"] = b.id;
      v["choices"] = choices;
      out << v.dump() << '\n';
    }
  }
}

std::vector<PseudoBatch> read_pseudo_corpus(std::istream& in) {
  std::vector<PseudoBatch> batches;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto v = nlohmann::json::parse(line);
      PseudoInstance p;
      p.paraphrase = v.at("paraphrase").get<Tokens>();
      p.predicate = v.at("predicate").get<Tokens>();
      const auto s = v.at("subj_span").get<std::vector<std::size_t>>();
      const auto o = v.at("obj_span").get<std::vector<std::size_t>>();
      if (s.size() != 2 || o.size() != 2 || s[0] < 1 || o[0] < 1 || s[1] > p.paraphrase.size() ||
          o[1] > p.paraphrase.size())
        throw ParseError("span out of range", lineno);
      p.subject_span = {s[0] - 1, s[1] - 1};
      p.object_span = {o[0] - 1, o[1] - 1};
      const auto id = v.at("batch_id").get<std::size_t>();
      if (batches.empty() || batches.back().id != id) {
        PseudoBatch b;
        b.id = id;
        for (const auto& c : v.at("choices").get<std::vector<std::string>>())
          b.choices.push_back(split_whitespace(c));
        batches.push_back(std::move(b));
      }
      auto& b = batches.back();
      const auto key = split_whitespace(normalize_predicate(p.predicate));
      const auto it = std::find(b.choices.begin(), b.choices.end(), key);
      if (it == b.choices.end()) throw ParseError("predicate missing from its batch choices", lineno);
      b.gold.push_back(static_cast<std::size_t>(it - b.choices.begin()));
      p.origin = lineno - 1;
      b.instances.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return batches;
}

std::vector<Tokens> read_sentences(std::istream& in) {
  std::vector<Tokens> out;
  std::string line;
  while (std::getline(in, line)) {
    auto toks = split_whitespace(line);
    if (!toks.empty()) out.push_back(std::move(toks));
  }
  return out;
}

}  // namespace choicematch
