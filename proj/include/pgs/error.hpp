#pragma once

#include <stdexcept>
#include <string>

namespace pgs {

enum class ErrorKind {
  InvalidArgument,
  ShapeMismatch,
  MalformedHeader,
  DimensionOverflow,
  TruncatedPayload,
  Io,
  Numerical,
  Config,
};

const char* to_string(ErrorKind kind) noexcept;

/// Single exception type for the library; `kind()` distinguishes failure classes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

inline void require(bool cond, ErrorKind kind, const char* what) {
  if (!cond) fail(kind, what);
}

}  // namespace pgs
