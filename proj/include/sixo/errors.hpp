#pragma once

#include <stdexcept>
#include <string>

namespace sixo {

/// A caller broke a documented precondition (shape mismatch, index out of range, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A numeric argument lies outside the domain of the function (e.g. a non-positive variance).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Inconsistent or invalid configuration of an experiment, bound or estimator.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A model does not expose the structure an algorithm needs.
class UnsupportedModel : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every particle weight became -inf (or NaN) at some timestep.
class DegenerateSweep : public std::runtime_error {
 public:
  DegenerateSweep(int timestep, const std::string& what)
      : std::runtime_error(what), timestep_(timestep) {}
  int timestep() const noexcept { return timestep_; }

 private:
  int timestep_;
};

/// Training produced a non-finite loss or gradient.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(long step, const std::string& what)
      : std::runtime_error(what), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

}  // namespace sixo
