#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace remedy {

// Coarse failure categories; the CLI maps each to a distinct exit code.
enum class ErrorKind {
  kInput,       // unreadable or malformed input data
  kConfig,      // invalid parameters or flag combinations
  kParse,       // model reply did not follow the expected protocol
  kAuth,        // missing or rejected credential
  kTransport,   // endpoint unreachable, timeouts, exhausted retries
  kDivergence,  // training guard tripped
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInput: return "input";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kAuth: return "auth";
    case ErrorKind::kTransport: return "transport";
    case ErrorKind::kDivergence: return "divergence";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace remedy
