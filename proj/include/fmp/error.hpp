#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fmp {

enum class ErrorCode {
  invalid_argument,
  dimension_mismatch,
  out_of_range,
  empty_group,
  numeric,
  infeasible,
  io,
  parse,
};

std::string_view to_string(ErrorCode code);

// Every library failure is reported through this exception. The CLI renders
// it as a single "error: <code>: <message>" line.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace fmp
