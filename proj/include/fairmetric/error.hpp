#pragma once

#include <stdexcept>
#include <string>

namespace fairmetric {

// Process exit codes used by the CLI.
enum class ErrorKind : int {
  config = 1,
  data = 2,
  numerical = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

// Bad arguments, dimensions or configuration values.
struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

// Malformed input files. Messages name the row and column when known.
struct IngestionError : Error {
  explicit IngestionError(const std::string& what) : Error(ErrorKind::data, what) {}
};

// A learner was handed an unusable constraint set (e.g. no dissimilar pairs).
struct ConstraintError : Error {
  explicit ConstraintError(const std::string& what) : Error(ErrorKind::data, what) {}
};

// A loss cannot be computed (e.g. empty test triplet set).
struct EvaluationError : Error {
  explicit EvaluationError(const std::string& what) : Error(ErrorKind::data, what) {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

// A matrix that should be symmetric/PSD is not, beyond floating-point slack.
struct InvariantError : Error {
  explicit InvariantError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

}  // namespace fairmetric
