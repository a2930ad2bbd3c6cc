#pragma once

#include <stdexcept>
#include <string>

namespace qpf {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A precondition on an argument (unit norm, weight normalization, ...) was
// violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Error rotation sits at or near the Rodrigues-parameter singularity.
class SingularError : public Error {
 public:
  using Error::Error;
};

// Jacobi sweeps did not converge; almost always NaN/Inf in the input.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

// A covariance could not be factored (not positive semidefinite).
class DecompositionError : public Error {
 public:
  using Error::Error;
};

// Every particle log-weight was -Inf or NaN.
class WeightCollapseError : public Error {
 public:
  using Error::Error;
};

// Malformed scenario or filter configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace qpf
