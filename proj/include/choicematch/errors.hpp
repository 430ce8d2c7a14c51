#pragma once

#include <stdexcept>
#include <string>

namespace choicematch {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CHOICEMATCH_ERROR(Name)           \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

// relation_core
CHOICEMATCH_ERROR(SpanOrderError);
CHOICEMATCH_ERROR(SpanBoundsError);
CHOICEMATCH_ERROR(EmptyTokensError);
CHOICEMATCH_ERROR(InsufficientRelationsError);
CHOICEMATCH_ERROR(InsufficientInstancesError);
CHOICEMATCH_ERROR(InvariantError);

/// Malformed input file; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// prompt_codec
CHOICEMATCH_ERROR(EmptyChoicesError);
CHOICEMATCH_ERROR(PromptTooLongError);
CHOICEMATCH_ERROR(MarkerLossError);

// encoder
CHOICEMATCH_ERROR(ConfigError);
CHOICEMATCH_ERROR(LengthError);
CHOICEMATCH_ERROR(NonFiniteError);
CHOICEMATCH_ERROR(NonFiniteGradientError);
CHOICEMATCH_ERROR(CheckpointError);

// matching_head
CHOICEMATCH_ERROR(IndexError);
CHOICEMATCH_ERROR(DimensionMismatchError);
CHOICEMATCH_ERROR(EmptyError);

// triplet_paraphrase
CHOICEMATCH_ERROR(MalformedWrapError);
CHOICEMATCH_ERROR(InsufficientDistinctPredicatesError);

// training
CHOICEMATCH_ERROR(DivergenceError);
CHOICEMATCH_ERROR(RestoreMismatchError);

#undef CHOICEMATCH_ERROR

}  // namespace choicematch
