#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace alfa {

enum class ErrorCode {
  invalid_argument,
  dimension_mismatch,
  empty_input,
  degenerate,
  bad_magic,
  unsupported_version,
  truncated,
  overlapping_records,
  duplicate_name,
  shape_mismatch,
  malformed_header,
  missing_tensor,
  io,
  network,
  parse,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::empty_input: return "empty_input";
    case ErrorCode::degenerate: return "degenerate";
    case ErrorCode::bad_magic: return "bad_magic";
    case ErrorCode::unsupported_version: return "unsupported_version";
    case ErrorCode::truncated: return "truncated";
    case ErrorCode::overlapping_records: return "overlapping_records";
    case ErrorCode::duplicate_name: return "duplicate_name";
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::malformed_header: return "malformed_header";
    case ErrorCode::missing_tensor: return "missing_tensor";
    case ErrorCode::io: return "io";
    case ErrorCode::network: return "network";
    case ErrorCode::parse: return "parse";
  }
  return "unknown";
}

// Every failure raised by the library carries one of the codes above so
// callers (the CLI in particular) can map it without string matching.
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

}  // namespace alfa
