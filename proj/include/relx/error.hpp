#pragma once

#include <stdexcept>
#include <string>

namespace relx {

// Error taxonomy used across the toolkit. The CLI maps ConfigError and
// ValidationError to exit code 2, everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad or contradictory configuration (unknown key, missing path, dim mismatch).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Structurally unreadable input (bad JSON line, wrong field count).
class FormatError : public Error {
 public:
  FormatError(const std::string& what, size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  size_t line() const { return line_; }

 private:
  size_t line_;
};

// Readable input that violates a data invariant (span out of range, cyclic parse).
class ValidationError : public Error {
 public:
  ValidationError(const std::string& what, size_t record, const std::string& field)
      : Error(what + " (record " + std::to_string(record) + ", field '" + field + "')"),
        record_(record),
        field_(field) {}
  explicit ValidationError(const std::string& what) : Error(what), record_(0) {}
  size_t record() const { return record_; }
  const std::string& field() const { return field_; }

 private:
  size_t record_;
  std::string field_;
};

// Operation called outside its mathematical domain (empty set, all-masked row).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Training aborted (non-finite loss).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace relx
