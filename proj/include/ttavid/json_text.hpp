#pragma once

// Minimal ordered JSON emitter used by the persisted formats. Floats are
// rendered with 17 significant digits so that text round-trips bitwise, and
// keys are written in call order so outputs are byte-stable across runs.
// Parsing goes through nlohmann::json.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include <json.hpp>

namespace ttavid::json_text {

std::string format_double(double v);
std::string quote(std::string_view s);

class ObjectWriter {
 public:
  ObjectWriter& field(std::string_view key, std::string_view value);
  ObjectWriter& field(std::string_view key, const char* value) {
    return field(key, std::string_view(value));
  }
  ObjectWriter& field(std::string_view key, double value);
  ObjectWriter& field(std::string_view key, std::int64_t value);
  ObjectWriter& field(std::string_view key, int value) {
    return field(key, static_cast<std::int64_t>(value));
  }
  ObjectWriter& field(std::string_view key, std::size_t value) {
    return field(key, static_cast<std::int64_t>(value));
  }
  ObjectWriter& field(std::string_view key, bool value);
  ObjectWriter& field(std::string_view key, std::span<const double> values);
  ObjectWriter& field(std::string_view key, std::span<const std::size_t> values);
  // Inserts already-serialized JSON.
  ObjectWriter& raw(std::string_view key, std::string_view json);

  std::string str() const { return out_ + "}"; }

 private:
  void key(std::string_view k);
  std::string out_ = "{";
  bool first_ = true;
};

// Parses `text`, converting nlohmann parse errors into DataFormatError that
// names `what` and the byte offset.
nlohmann::json parse(std::string_view text, std::string_view what);

}  // namespace ttavid::json_text
