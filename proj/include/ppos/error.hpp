#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ppos {

// Machine-readable error taxonomy shared by the library, CLI exit codes and
// HTTP status mapping.
enum class ErrorCode {
  domain,               // a precondition on an input value is violated
  degenerate_variance,  // a variance estimate is zero (e.g. p_n in {0,1})
  estimation,           // an estimator is undefined for the data (e.g. no events)
  numerical,            // an internal numerical procedure failed
  schema,               // malformed request / usage error
  size_cap,             // request exceeds a configured computation cap
};

std::string_view to_string(ErrorCode code);

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

inline void require(bool condition, ErrorCode code, const char* message) {
  if (!condition) fail(code, message);
}

inline void require_domain(bool condition, const char* message) {
  if (!condition) fail(ErrorCode::domain, message);
}

}  // namespace ppos
