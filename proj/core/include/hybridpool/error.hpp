#pragma once

#include <stdexcept>
#include <string>

namespace hybridpool {

/// Raised for invalid inputs: bad parameters, infeasible designs, malformed
/// files. The CLI maps this to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical procedure cannot produce a trustworthy result
/// (singular information, quadrature failure, too many failed fits).
/// The CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hybridpool
