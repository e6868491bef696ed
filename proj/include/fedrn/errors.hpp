#pragma once

#include <stdexcept>
#include <string>

namespace fedrn {

/// Raised when a caller breaks an operation's precondition (dimension
/// mismatch, label out of range, weights that do not sum to one, ...).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for configurations that cannot be simulated. `field()` names the
/// offending configuration key when one is known.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field.empty() ? message : field + ": " + message),
        field_(std::move(field)),
        message_(message) {}
  explicit ConfigError(const std::string& message) : ConfigError("", message) {}

  const std::string& field() const noexcept { return field_; }
  /// The explanation without the field prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  std::string field_;
  std::string message_;
};

/// sgd_train was handed nothing to train on.
class NoTrainingData : public std::invalid_argument {
 public:
  NoTrainingData() : std::invalid_argument("no training examples") {}
};

}  // namespace fedrn
