#pragma once

#include <stdexcept>
#include <string>

namespace prunelab {

// Process exit codes used by the CLI. Library code throws Error with the
// category; the CLI maps it to the exit status.
enum ExitCode : int {
  exit_ok = 0,
  exit_runtime = 1,
  exit_usage = 2,
  exit_bad_config = 3,
  exit_missing_input = 4,
  exit_validation = 5,
};

class Error : public std::runtime_error {
 public:
  explicit Error(std::string msg, int code = exit_runtime)
      : std::runtime_error(std::move(msg)), code_(code) {}
  int exit_code() const { return code_; }

 private:
  int code_;
};

[[noreturn]] inline void fail(std::string msg, int code = exit_runtime) {
  throw Error(std::move(msg), code);
}

inline void require(bool cond, const std::string& msg, int code = exit_runtime) {
  if (!cond) fail(msg, code);
}

}  // namespace prunelab
