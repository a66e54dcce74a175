#pragma once

#include <stdexcept>
#include <string>

namespace msp {

/// Shape or arity mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A non-finite value appeared during a forward or backward sweep.
/// `step` is the sequence index being processed, or -1 outside a rollout.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, int step)
      : std::runtime_error(what + (step >= 0 ? " (step " + std::to_string(step) + ")" : "")),
        step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

/// Washout or rollout produced a non-finite state.
class InstabilityError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Motion-model integration left its valid domain (pitch singularity).
class IntegrationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Training loss became non-finite.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, int epoch)
      : std::runtime_error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

/// Malformed input file, config, or model-spec string.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operations invoked in an invalid order.
class SequencingError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace msp
