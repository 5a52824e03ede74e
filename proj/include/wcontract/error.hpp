#pragma once

#include <stdexcept>
#include <string>

namespace wcontract {

enum class ErrorKind {
  InvalidParameter,
  InvalidDomain,
  InvalidMap,
  MassMismatch,
  DivisionGuard,
  StepFailure,
  CflViolation,
  MollificationError,
  ConfigError,
  IoError,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidParameter: return "invalid-parameter";
    case ErrorKind::InvalidDomain: return "invalid-domain";
    case ErrorKind::InvalidMap: return "invalid-map";
    case ErrorKind::MassMismatch: return "mass-mismatch";
    case ErrorKind::DivisionGuard: return "division-guard";
    case ErrorKind::StepFailure: return "step-failure";
    case ErrorKind::CflViolation: return "cfl-violation";
    case ErrorKind::MollificationError: return "mollification-error";
    case ErrorKind::ConfigError: return "config-error";
    case ErrorKind::IoError: return "io-error";
  }
  return "unknown";
}

/// Single exception type for the library; `kind()` tells callers which
/// contract was broken.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace wcontract
