#pragma once

#include <stdexcept>
#include <string>

namespace dstkit {

enum class ErrorKind {
  kInput,       // missing or unreadable files, malformed input
  kValidation,  // well-formed input that violates a data-model invariant
  kBackend,     // decoder backend failure
  kEvaluation,  // prediction/gold mismatch or failed assertion
};

// All toolkit failures are reported as dstkit::Error. The module name is
// carried separately so the CLI can attribute the failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string module, const std::string& message)
      : std::runtime_error(module + ": " + message),
        kind_(kind),
        module_(std::move(module)) {}

  ErrorKind kind() const { return kind_; }
  const std::string& module() const { return module_; }

 private:
  ErrorKind kind_;
  std::string module_;
};

// Process exit code for a failure of the given kind.
inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kEvaluation:
      return 1;
    case ErrorKind::kInput:
    case ErrorKind::kValidation:
      return 2;
    case ErrorKind::kBackend:
      return 3;
  }
  return 2;
}

}  // namespace dstkit
