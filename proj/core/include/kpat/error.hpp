#pragma once

#include <stdexcept>
#include <string>

namespace kpat {

/// Broad failure categories. The CLI maps these onto process exit codes.
enum class ErrorKind {
  kShape,         // tensor dimension mismatch
  kParameter,     // invalid argument value (temperature <= 0, lambda outside [0,1], ...)
  kConfig,        // missing/invalid configuration field or path
  kDataMismatch,  // incompatible artifacts: checksum, key dim, tokenizer, counts
  kFormat,        // malformed file contents
  kNumeric,       // NaN/Inf encountered
  kIo,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Exit code contract: 0 success, 2 config error, 3 data mismatch, 4 numeric failure.
inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
      return 2;
    case ErrorKind::kDataMismatch:
    case ErrorKind::kFormat:
      return 3;
    case ErrorKind::kNumeric:
      return 4;
    default:
      return 1;
  }
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace kpat
