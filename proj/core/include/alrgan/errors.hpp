#pragma once

#include <stdexcept>
#include <string>

namespace alrgan {

/// Incompatible tensor extents. The message names both shapes.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Axis or index outside the valid range.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Caller broke an operation's precondition (non-scalar loss, missing input).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid configuration or hyperparameter.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input data violates a documented invariant (non-PSD covariance, rows not
/// summing to one).
class DataError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Token id or string outside the closed vocabulary.
class VocabularyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A loss became NaN or infinite during training.
class NumericFault : public std::runtime_error {
 public:
  NumericFault(const std::string& what, std::string diagnostic)
      : std::runtime_error(what), diagnostic_(std::move(diagnostic)) {}

  const std::string& diagnostic() const noexcept { return diagnostic_; }

 private:
  std::string diagnostic_;
};

}  // namespace alrgan
