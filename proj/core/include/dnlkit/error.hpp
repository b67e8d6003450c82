#pragma once

#include <stdexcept>
#include <string>

namespace dnlkit {

// Error categories double as process exit codes (see tools/).
enum class ErrorKind : int {
  config = 2,        // bad flags, malformed config
  data = 3,          // malformed or inconsistent input files
  precondition = 4,  // operation preconditions violated
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}

  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_config(const std::string& msg) {
  throw Error(ErrorKind::config, msg);
}
[[noreturn]] inline void throw_data(const std::string& msg) {
  throw Error(ErrorKind::data, msg);
}
[[noreturn]] inline void throw_precondition(const std::string& msg) {
  throw Error(ErrorKind::precondition, msg);
}

}  // namespace dnlkit
