#pragma once

#include <stdexcept>
#include <string>

namespace pmkg {

// Maps onto CLI exit codes: usage → 1, data → 2. Numeric errors are
// programming or input-contract violations inside the math core.
enum class ErrorKind { usage, data, numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string code, const std::string& detail = {})
      : std::runtime_error(detail.empty() ? code : code + ": " + detail),
        kind_(kind),
        code_(std::move(code)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& code() const noexcept { return code_; }

 private:
  ErrorKind kind_;
  std::string code_;
};

[[noreturn]] inline void fail_numeric(std::string code, const std::string& detail = {}) {
  throw Error(ErrorKind::numeric, std::move(code), detail);
}
[[noreturn]] inline void fail_data(std::string code, const std::string& detail = {}) {
  throw Error(ErrorKind::data, std::move(code), detail);
}
[[noreturn]] inline void fail_usage(std::string code, const std::string& detail = {}) {
  throw Error(ErrorKind::usage, std::move(code), detail);
}

}  // namespace pmkg
