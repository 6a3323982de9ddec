#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace livescaler {

/// Bad configuration: inadmissible range bounds, invalid temperament, bad config file values.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Pitch arithmetic left the representable range.
class OverflowError : public std::overflow_error {
 public:
  using std::overflow_error::overflow_error;
};

/// Unknown name in a fixed table (degree names, pad roles).
class LookupError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Text parse failure, carrying the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Malformed wire record.
class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Standard MIDI file load failure, carrying the byte offset where it was detected.
class SmfError : public std::runtime_error {
 public:
  SmfError(std::size_t offset, const std::string& what)
      : std::runtime_error("offset " + std::to_string(offset) + ": " + what), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace livescaler
