#pragma once

#include <stdexcept>
#include <string>

namespace vservo {

/// Precondition violated by a caller-supplied value.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Innovation covariance too ill-conditioned to invert; callers treat the
/// epoch as a vision fault.
class DegradedUpdate : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Point geometry does not determine a unique rotation.
class AmbiguousFit : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rendezvous solver could not drive the terminal residual below tolerance.
class NoSolution : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vservo
