#include "ttavid/answer.hpp"

#include <algorithm>
#include <cctype>
#include <optional>
#include <stdexcept>

namespace ttavid {
namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool is_strip_char(char c) {
  if (is_space(c)) return true;
  switch (c) {
    case '.': case ',': case ';': case ':': case '!': case '?':
    case '(': case ')': case '[': case ']': case '{': case '}':
    case '"': case '\'': case '`': case '*': case '$':
      return true;
    default:
      return false;
  }
}

std::string_view strip(std::string_view s, bool keep_leading_decimal_point = false) {
  while (!s.empty() && is_strip_char(s.front())) {
    if (keep_leading_decimal_point && s.front() == '.' && s.size() > 1 && s[1] >= '0' && s[1] <= '9') break;
    s.remove_prefix(1);
  }
  while (!s.empty() && is_strip_char(s.back())) s.remove_suffix(1);
  return s;
}

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

// Case-insensitive search for the last occurrence of `needle` (lowercase).
std::size_t rfind_icase(std::string_view hay, std::string_view needle, std::size_t end) {
  if (needle.size() > end) return std::string_view::npos;
  for (std::size_t i = end - needle.size() + 1; i-- > 0;) {
    bool ok = true;
    for (std::size_t j = 0; j < needle.size() && ok; ++j) ok = lower(hay[i + j]) == needle[j];
    if (ok) return i;
  }
  return std::string_view::npos;
}

std::string canonical_numeric(std::string_view s) {
  bool negative = false;
  if (!s.empty() && (s.front() == '+' || s.front() == '-')) {
    negative = s.front() == '-';
    s.remove_prefix(1);
  }
  const std::size_t dot = s.find('.');
  std::string_view int_part = s.substr(0, dot);
  std::string_view frac_part = dot == std::string_view::npos ? std::string_view{} : s.substr(dot + 1);
  if (int_part.empty() && frac_part.empty()) return {};
  auto all_digits = [](std::string_view d) {
    return std::all_of(d.begin(), d.end(), [](char c) { return c >= '0' && c <= '9'; });
  };
  if (!all_digits(int_part) || !all_digits(frac_part)) return {};
  if (dot != std::string_view::npos && frac_part.empty() && int_part.empty()) return {};

  while (int_part.size() > 1 && int_part.front() == '0') int_part.remove_prefix(1);
  while (!frac_part.empty() && frac_part.back() == '0') frac_part.remove_suffix(1);
  std::string out(int_part.empty() ? "0" : std::string(int_part));
  if (!frac_part.empty()) {
    out += '.';
    out += frac_part;
  }
  if (negative && out != "0") out.insert(out.begin(), '-');
  return out;
}

std::string normalize_text(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += lower(c);
  }
  return out;
}

// Token captured after a tag: a single whitespace-delimited token for letter
// and numeric formats, the rest of the line for free text.
std::string_view capture_after(std::string_view text, std::size_t pos, const AnswerFormat& format) {
  while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t' || text[pos] == ':')) ++pos;
  std::size_t end = pos;
  if (format.kind == AnswerFormat::Kind::FreeTextNormalized) {
    while (end < text.size() && text[end] != '\n' && text[end] != '\r') ++end;
  } else {
    while (end < text.size() && !is_space(text[end])) ++end;
  }
  return text.substr(pos, end - pos);
}

std::optional<std::string_view> last_boxed(std::string_view text) {
  constexpr std::string_view marker = "\\boxed{";
  const std::size_t at = text.rfind(marker);
  if (at == std::string_view::npos) return std::nullopt;
  const std::size_t start = at + marker.size();
  int depth = 1;
  for (std::size_t i = start; i < text.size(); ++i) {
    if (text[i] == '{') ++depth;
    if (text[i] == '}' && --depth == 0) return text.substr(start, i - start);
  }
  return std::nullopt;  // unterminated marker does not fire
}

std::optional<std::string_view> last_tag(std::string_view text, const AnswerFormat& format) {
  std::size_t best = std::string_view::npos;
  std::size_t best_end = 0;
  const std::size_t a = rfind_icase(text, "the answer is", text.size());
  if (a != std::string_view::npos) {
    best = a;
    best_end = a + 13;
  }
  // "answer:" allowing spaces before the colon
  for (std::size_t end = text.size(); end > 0;) {
    const std::size_t b = rfind_icase(text, "answer", end);
    if (b == std::string_view::npos) break;
    std::size_t p = b + 6;
    while (p < text.size() && (text[p] == ' ' || text[p] == '\t')) ++p;
    if (p < text.size() && text[p] == ':') {
      if (best == std::string_view::npos || b > best) {
        best = b;
        best_end = p + 1;
      }
      break;
    }
    end = b + 5;  // keep searching strictly before this occurrence
    if (b == 0) break;
  }
  if (best == std::string_view::npos) return std::nullopt;
  return capture_after(text, best_end, format);
}

std::optional<char> last_option_letter(std::string_view text, int option_count) {
  const char max_letter = static_cast<char>('A' + option_count - 1);
  for (std::size_t i = text.size(); i-- > 0;) {
    const char c = text[i];
    if (c < 'A' || c > max_letter) continue;
    const bool left_ok = i == 0 || is_space(text[i - 1]) || text[i - 1] == '(';
    const bool right_ok = i + 1 == text.size() || text[i + 1] == '.' || text[i + 1] == ')' ||
                          text[i + 1] == '\n' || text[i + 1] == '\r';
    if (left_ok && right_ok) return c;
  }
  return std::nullopt;
}

}  // namespace

AnswerFormat AnswerFormat::multiple_choice(int options) {
  if (options < 2 || options > 26) {
    throw std::invalid_argument("multiple-choice option count must be in [2, 26], got " +
                                std::to_string(options));
  }
  return {Kind::MultipleChoiceLetter, options};
}

ExtractedAnswer canonicalize(std::string_view token, const AnswerFormat& format) {
  // ".5" is a number, so numeric tokens keep a leading point before a digit.
  const std::string_view s = strip(token, format.kind == AnswerFormat::Kind::NumericExact);
  if (s.empty()) return ExtractedAnswer::invalid();
  switch (format.kind) {
    case AnswerFormat::Kind::MultipleChoiceLetter: {
      if (s.size() != 1) return ExtractedAnswer::invalid();
      const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
      if (c < 'A' || c >= 'A' + format.option_count) return ExtractedAnswer::invalid();
      return ExtractedAnswer::of(std::string(1, c));
    }
    case AnswerFormat::Kind::NumericExact: {
      std::string n = canonical_numeric(s);
      if (n.empty()) return ExtractedAnswer::invalid();
      return ExtractedAnswer::of(std::move(n));
    }
    case AnswerFormat::Kind::FreeTextNormalized: {
      std::string t = normalize_text(s);
      if (t.empty()) return ExtractedAnswer::invalid();
      return ExtractedAnswer::of(std::move(t));
    }
  }
  return ExtractedAnswer::invalid();
}

ExtractedAnswer extract_answer(std::string_view text, const AnswerFormat& format) {
  if (auto boxed = last_boxed(text)) return canonicalize(*boxed, format);
  if (auto tagged = last_tag(text, format)) return canonicalize(*tagged, format);
  if (format.kind == AnswerFormat::Kind::MultipleChoiceLetter) {
    if (auto letter = last_option_letter(text, format.option_count)) {
      return ExtractedAnswer::of(std::string(1, *letter));
    }
  }
  return ExtractedAnswer::invalid();
}

std::string to_string(const AnswerFormat& format) {
  switch (format.kind) {
    case AnswerFormat::Kind::MultipleChoiceLetter:
      return "mcq:" + std::to_string(format.option_count);
    case AnswerFormat::Kind::NumericExact:
      return "numeric";
    case AnswerFormat::Kind::FreeTextNormalized:
      return "text";
  }
  return "text";
}

AnswerFormat parse_answer_format(std::string_view text) {
  if (text == "numeric") return AnswerFormat::numeric();
  if (text == "text") return AnswerFormat::free_text();
  if (text.substr(0, 4) == "mcq:") {
    const std::string n(text.substr(4));
    try {
      std::size_t used = 0;
      const int k = std::stoi(n, &used);
      if (used == n.size()) return AnswerFormat::multiple_choice(k);
    } catch (const std::logic_error&) {
    }
  }
  throw std::invalid_argument("unknown answer format '" + std::string(text) +
                              "' (expected mcq:<k>, numeric or text)");
}

}  // namespace ttavid
