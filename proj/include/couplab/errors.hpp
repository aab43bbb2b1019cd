#pragma once

#include <stdexcept>
#include <string>

namespace couplab {

// Base of every error thrown by the library. The CLI maps each subclass to a
// distinct message prefix and a nonzero exit status.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed arguments: unknown state, bad tolerance, mismatched horizons, ...
class InputError : public Error {
 public:
  using Error::Error;
};

// A request exceeds one of the configured desk-scale caps.
class ResourceError : public Error {
 public:
  using Error::Error;
};

// A numerical solver failed to converge or to certify its answer.
class SolverError : public Error {
 public:
  using Error::Error;
};

// A sampler produced a non-finite state.
class SimulationError : public Error {
 public:
  SimulationError(const std::string& what, std::size_t index)
      : Error(what + " (at step " + std::to_string(index) + ")"), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

// The SDE integrator produced a non-finite state.
class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& what, double time)
      : Error(what + " (at t=" + std::to_string(time) + ")"), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

// A model violates one of its declared structural bounds.
class ModelError : public Error {
 public:
  using Error::Error;
};

// Experiment or chain configuration could not be parsed or validated.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace couplab
