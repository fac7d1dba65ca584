#pragma once

#include <stdexcept>
#include <string>

namespace egovideo {

// Exit codes used by the command-line tool. Library code throws; the CLI maps
// the error kind to a process exit code.
enum class ErrorKind {
  kInvalidArgument = 2,
  kMissingDependency = 3,
  kInvariantViolation = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what)
      : Error(ErrorKind::kInvalidArgument, what) {}
};

class MissingDependency : public Error {
 public:
  explicit MissingDependency(const std::string& what)
      : Error(ErrorKind::kMissingDependency, what) {}
};

class InvariantViolation : public Error {
 public:
  explicit InvariantViolation(const std::string& what)
      : Error(ErrorKind::kInvariantViolation, what) {}
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

}  // namespace egovideo
