#pragma once

#include <stdexcept>
#include <string>

namespace codistillery {

/// Operand shapes do not agree.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A documented precondition of an operation was violated at runtime.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Prediction exchange was attempted on groups that saw different minibatches.
class CoordinatedSamplingError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// Invalid experiment or model configuration. `key_path()` names the offending
/// field in dotted form when it is known (e.g. "strategy.exchange_period").
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& message, std::string key_path = {})
      : std::runtime_error(key_path.empty() ? message : key_path + ": " + message),
        key_path_(std::move(key_path)) {}

  const std::string& key_path() const noexcept { return key_path_; }

 private:
  std::string key_path_;
};

}  // namespace codistillery
