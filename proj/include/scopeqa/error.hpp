#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace scopeqa {

// Coarse failure classes. The CLI prints the code as a greppable prefix.
enum class ErrorCode {
  kIo,          // E_IO: unreadable/unwritable files, corrupt containers
  kShape,       // E_SHAPE: dimension or length mismatches
  kPrecondition,  // E_PRECOND: invalid arguments or missing prerequisites
  kDegenerate,  // E_DEGENERATE: zero-variance or otherwise undefined statistics
};

constexpr std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo:
      return "E_IO";
    case ErrorCode::kShape:
      return "E_SHAPE";
    case ErrorCode::kPrecondition:
      return "E_PRECOND";
    case ErrorCode::kDegenerate:
      return "E_DEGENERATE";
  }
  return "E_UNKNOWN";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) throw Error(code, what);
}

}  // namespace scopeqa
