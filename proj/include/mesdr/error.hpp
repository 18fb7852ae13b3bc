#pragma once

#include <stdexcept>
#include <string>

namespace mesdr {

// Error classes map one-to-one onto CLI exit codes:
//   ArgumentError -> 1, DecodeError -> 2, EstimationError -> 3.

class ArgumentError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class DecodeError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class EstimationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Residuals with zero energy: no autocorrelation or variance can be formed.
class DegenerateVarianceError : public EstimationError {
public:
  using EstimationError::EstimationError;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ArgumentError(what);
}

}  // namespace detail
}  // namespace mesdr
