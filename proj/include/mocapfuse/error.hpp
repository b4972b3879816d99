#pragma once

#include <stdexcept>
#include <string>

namespace mocapfuse {

enum class ErrorCode {
  kInvalidArgument = 1,
  kParse = 2,
  kIo = 3,
  kDivergence = 4,
  kInternal = 5,
};

/// Library exception carrying a code that maps one-to-one onto the C API status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline Error invalid_argument(const std::string& what) {
  return Error(ErrorCode::kInvalidArgument, what);
}

}  // namespace mocapfuse
