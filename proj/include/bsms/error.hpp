#pragma once

#include <stdexcept>
#include <string>

namespace bsms {

enum class ErrorKind {
  InvalidArgument,  // bad input, violated precondition, schema error
  Io,               // file missing, unreadable, unwritable
  Numerical,        // non-finite values, diverged training
};

/// Base exception for every failure raised by the library. The kind maps
/// one-to-one onto the CLI exit codes (2, 3, 4).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error invalid_argument(const std::string& what) { return {ErrorKind::InvalidArgument, what}; }
inline Error io_error(const std::string& what) { return {ErrorKind::Io, what}; }
inline Error numerical_error(const std::string& what) { return {ErrorKind::Numerical, what}; }

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument:
      return "invalid_argument";
    case ErrorKind::Io:
      return "io";
    case ErrorKind::Numerical:
      return "numerical";
  }
  return "unknown";
}

}  // namespace bsms
