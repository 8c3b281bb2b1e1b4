#pragma once

#include <stdexcept>
#include <string>

namespace chj {

/// Failure category. The CLI maps each category onto its own exit-code range.
enum class ErrorKind {
  config,         // 10-19
  numerics,       // 20-29: blow-up, non-contraction, momentum box
  hypothesis,     // 30-39: theorem preconditions not met
  certification,  // 40-49
  internal,
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

struct NumericsError : Error {
  explicit NumericsError(const std::string& what) : Error(ErrorKind::numerics, what) {}
};

struct HypothesisError : Error {
  explicit HypothesisError(const std::string& what) : Error(ErrorKind::hypothesis, what) {}
};

struct CertificationError : Error {
  CertificationError(const std::string& what, double residual)
    : Error(ErrorKind::certification, what), residual(residual) {}
  double residual;
};

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 10;
    case ErrorKind::numerics: return 20;
    case ErrorKind::hypothesis: return 30;
    case ErrorKind::certification: return 40;
    case ErrorKind::internal: return 50;
  }
  return 50;
}

}  // namespace chj
