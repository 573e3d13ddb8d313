#pragma once
// Shared error types. Each failure family gets its own exception so callers
// (and the CLI exit-code mapping) can tell them apart.

#include <cstdint>
#include <stdexcept>
#include <string>

namespace matner {

// Shape mismatch in a numeric operation; the message names both shapes.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed IOB input; carries the 1-based line number.
struct ParseError : std::runtime_error {
  int line = 0;
  ParseError(int line_no, const std::string& what)
      : std::runtime_error("line " + std::to_string(line_no) + ": " + what), line(line_no) {}
};

struct EmptyCorpusError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Model-bundle load failures, one type per failure mode.
struct BundleVersionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BundleTruncatedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BundleChecksumError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BundleFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string shape_str(int64_t rows, int64_t cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

}  // namespace matner
