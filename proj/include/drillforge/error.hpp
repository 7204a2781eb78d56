#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace drillforge {

enum class ErrorCode {
  invalid_argument,
  syntax,
  unbound_variable,
  division_by_zero,
  not_found,
  conflict,
  out_of_order,
  insufficient_funds,
  already_sold,
  unauthorized,
  forbidden,
  degenerate_template,
  corrupt_log,
  io,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::syntax: return "syntax_error";
    case ErrorCode::unbound_variable: return "unbound_variable";
    case ErrorCode::division_by_zero: return "division_by_zero";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::out_of_order: return "out_of_order";
    case ErrorCode::insufficient_funds: return "insufficient_funds";
    case ErrorCode::already_sold: return "already_sold";
    case ErrorCode::unauthorized: return "unauthorized";
    case ErrorCode::forbidden: return "forbidden";
    case ErrorCode::degenerate_template: return "degenerate_template";
    case ErrorCode::corrupt_log: return "corrupt_log";
    case ErrorCode::io: return "io_error";
  }
  return "unknown";
}

/// Every failure raised by the library. `offset()` is set for errors that
/// point into a text or byte stream (expression syntax, document decoding).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::size_t> offset = std::nullopt)
      : std::runtime_error(message), code_(code), offset_(offset) {}

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> offset() const noexcept { return offset_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> offset_;
};

}  // namespace drillforge
