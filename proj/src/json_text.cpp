#include "ttavid/json_text.hpp"

#include <cmath>
#include <cstdio>

#include "ttavid/errors.hpp"

namespace ttavid::json_text {

std::string format_double(double v) {
  if (!std::isfinite(v)) return "null";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string quote(std::string_view s) { return nlohmann::json(std::string(s)).dump(); }

void ObjectWriter::key(std::string_view k) {
  if (!first_) out_ += ",";
  first_ = false;
  out_ += quote(k);
  out_ += ":";
}

ObjectWriter& ObjectWriter::field(std::string_view k, std::string_view value) {
  key(k);
  out_ += quote(value);
  return *this;
}

ObjectWriter& ObjectWriter::field(std::string_view k, double value) {
  key(k);
  out_ += format_double(value);
  return *this;
}

ObjectWriter& ObjectWriter::field(std::string_view k, std::int64_t value) {
  key(k);
  out_ += std::to_string(value);
  return *this;
}

ObjectWriter& ObjectWriter::field(std::string_view k, bool value) {
  key(k);
  out_ += value ? "true" : "false";
  return *this;
}

ObjectWriter& ObjectWriter::field(std::string_view k, std::span<const double> values) {
  key(k);
  out_ += "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out_ += ",";
    out_ += format_double(values[i]);
  }
  out_ += "]";
  return *this;
}

ObjectWriter& ObjectWriter::field(std::string_view k, std::span<const std::size_t> values) {
  key(k);
  out_ += "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out_ += ",";
    out_ += std::to_string(values[i]);
  }
  out_ += "]";
  return *this;
}

ObjectWriter& ObjectWriter::raw(std::string_view k, std::string_view json) {
  key(k);
  out_ += json;
  return *this;
}

nlohmann::json parse(std::string_view text, std::string_view what) {
  try {
    return nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw DataFormatError(std::string(what) + ": parse error at byte " +
                          std::to_string(e.byte) + ": " + e.what());
  }
}

}  // namespace ttavid::json_text
