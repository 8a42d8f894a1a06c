#pragma once

#include <stdexcept>
#include <string>

namespace wflab {

// Error taxonomy mirrors the CLI exit codes: ConfigError -> 2,
// DataError -> 3, NumericError -> 4.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(msg) {}
};

// Raised when training produces a non-finite loss.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

// File-format errors carry a distinct kind so callers can tell a bad
// magic from a truncated payload from a version mismatch.
class FormatError : public DataError {
 public:
  enum class Kind { BadMagic, Truncated, VersionMismatch, Corrupt };

  FormatError(Kind kind, const std::string& msg) : DataError(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace wflab
