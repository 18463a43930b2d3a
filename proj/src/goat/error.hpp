#pragma once

#include <stdexcept>
#include <string>

namespace goat {

enum class ErrorKind {
  InvalidArgument,
  Parse,
  Validation,
  Domain,
  Io,
  Numeric,
};

/// Base error for everything the engine throws. The kind is mapped onto the
/// C API status codes and the CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error invalid_argument(const std::string& what) { return {ErrorKind::InvalidArgument, what}; }
inline Error parse_error(const std::string& what) { return {ErrorKind::Parse, what}; }
inline Error validation_error(const std::string& what) { return {ErrorKind::Validation, what}; }
inline Error domain_error(const std::string& what) { return {ErrorKind::Domain, what}; }
inline Error io_error(const std::string& what) { return {ErrorKind::Io, what}; }

}  // namespace goat
