#pragma once

#include <stdexcept>
#include <string>

namespace poivre {

/// Raised when an operation receives arguments outside its contract.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when no coordinate pair can be extracted from a model response.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File/stream failures, with the failure kind preserved for callers.
class IoError : public std::runtime_error {
 public:
  enum class Kind { missing_file, unsupported_format, corrupt_stream, write_failure };

  IoError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Transport-level failure talking to a remote endpoint, after retries.
class EndpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dataset schema violation, carrying the offending line and field.
class DatasetError : public std::runtime_error {
 public:
  DatasetError(int line, std::string field, const std::string& what)
      : std::runtime_error(what), line_(line), field_(std::move(field)) {}
  int line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  int line_;
  std::string field_;
};

}  // namespace poivre
