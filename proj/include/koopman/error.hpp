#pragma once

#include <stdexcept>
#include <string>

namespace koopman {

/// Failure categories. The CLI maps each one onto a process exit code.
enum class ErrorKind {
  invalid_argument,  // precondition violated by the caller
  config,            // malformed configuration or input file
  numeric,           // integration failure, divergence, singular solve
  non_convergence,   // averages or quadratures failed their refinement check
  not_found,         // requested structure (cycle, crossing, torus) absent
  degenerate_fit,    // not enough usable data for a fit
  roc_violation,     // Laplace evaluation outside its region of convergence
  aliasing,          // discrete eigenvalue maps ambiguously to continuous time
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::config: return "config";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::non_convergence: return "non_convergence";
    case ErrorKind::not_found: return "not_found";
    case ErrorKind::degenerate_fit: return "degenerate_fit";
    case ErrorKind::roc_violation: return "roc_violation";
    case ErrorKind::aliasing: return "aliasing";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, const std::string& what) {
  if (!condition) fail(ErrorKind::invalid_argument, what);
}

}  // namespace koopman
