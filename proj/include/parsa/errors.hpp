#pragma once

#include <stdexcept>
#include <string>

namespace parsa {

// Error classes map one-to-one onto CLI exit codes. Library code throws,
// the CLI prints what() and exits with the class code.
enum class ErrorClass : int {
  config = 2,   // invalid configuration, arguments, or preconditions
  format = 3,   // malformed input files
  numeric = 4,  // singular designs, degenerate models, failed estimation
  io = 5,       // filesystem failures
};

class Error : public std::runtime_error {
public:
  Error(ErrorClass cls, const std::string& msg) : std::runtime_error(msg), cls_(cls) {}
  ErrorClass error_class() const noexcept { return cls_; }
  int exit_code() const noexcept { return static_cast<int>(cls_); }

private:
  ErrorClass cls_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(ErrorClass::config, msg) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& msg) : Error(ErrorClass::format, msg) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(ErrorClass::numeric, msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(ErrorClass::io, msg) {}
};

}  // namespace parsa
