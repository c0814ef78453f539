#pragma once

// Answer extraction: turns free-form generated text into a canonical answer
// token. Unparseable text maps to the INVALID sentinel rather than throwing,
// so reward computation never has to handle extraction failures separately.

#include <string>
#include <string_view>

namespace ttavid {

struct AnswerFormat {
  enum class Kind { MultipleChoiceLetter, NumericExact, FreeTextNormalized };

  Kind kind = Kind::MultipleChoiceLetter;
  int option_count = 4;  // only meaningful for MultipleChoiceLetter, in [2, 26]

  static AnswerFormat multiple_choice(int options);
  static AnswerFormat numeric() { return {Kind::NumericExact, 0}; }
  static AnswerFormat free_text() { return {Kind::FreeTextNormalized, 0}; }

  friend bool operator==(const AnswerFormat&, const AnswerFormat&) = default;
};

inline constexpr std::string_view kInvalidAnswer = "INVALID";

struct ExtractedAnswer {
  std::string value{kInvalidAnswer};
  bool valid = false;

  static ExtractedAnswer invalid() { return {}; }
  static ExtractedAnswer of(std::string v) { return {std::move(v), true}; }

  friend bool operator==(const ExtractedAnswer&, const ExtractedAnswer&) = default;
};

// Rule cascade, first rule that fires wins:
//   1. last \boxed{...}
//   2. last "Answer: X" / "The answer is X" (case-insensitive)
//   3. multiple choice only: last standalone option letter followed by
//      '.', ')' or end of line
// A captured token that fails canonicalization yields INVALID.
ExtractedAnswer extract_answer(std::string_view text, const AnswerFormat& format);

// Canonical form of a captured token, or INVALID if it violates the format.
// Idempotent on its valid outputs.
ExtractedAnswer canonicalize(std::string_view token, const AnswerFormat& format);

// Text form used by the config and persisted files: "mcq:<k>", "numeric",
// "text".
std::string to_string(const AnswerFormat& format);
AnswerFormat parse_answer_format(std::string_view text);

}  // namespace ttavid
