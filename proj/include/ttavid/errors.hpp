#pragma once

#include <stdexcept>
#include <string>

namespace ttavid {

// Configuration could not be parsed or is inconsistent. CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A generation backend failed after exhausting retries. CLI exit code 3.
class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A persisted file (fdist-v1, simenv-v1, rolloutlog-v1, ...) is malformed.
// CLI exit code 4.
class DataFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ttavid
