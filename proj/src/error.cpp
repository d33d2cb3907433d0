#include "pgs/error.hpp"

namespace pgs {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::ShapeMismatch: return "shape mismatch";
    case ErrorKind::MalformedHeader: return "malformed header";
    case ErrorKind::DimensionOverflow: return "dimension overflow";
    case ErrorKind::TruncatedPayload: return "truncated payload";
    case ErrorKind::Io: return "io failure";
    case ErrorKind::Numerical: return "numerical failure";
    case ErrorKind::Config: return "config error";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace pgs
