#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mesdr/error.hpp"

namespace mesdr {

/// Mono sample sequence with its rate and a provenance label.
///
/// Amplitudes are dimensionless with nominal range [-1, 1]. Construction
/// enforces the invariants: positive rate, at least one sample, all finite.
class Signal {
public:
  Signal(std::vector<double> samples, std::uint32_t sample_rate, std::string source = {})
      : samples_(std::move(samples)), sample_rate_(sample_rate), source_(std::move(source)) {
    detail::require(sample_rate_ > 0, "Signal: sample_rate must be positive");
    detail::require(!samples_.empty(), "Signal: sample sequence is empty");
    for (std::size_t i = 0; i < samples_.size(); ++i) {
      if (!std::isfinite(samples_[i]))
        throw ArgumentError("Signal: non-finite sample at index " + std::to_string(i));
    }
  }

  [[nodiscard]] std::span<const double> samples() const { return samples_; }
  [[nodiscard]] std::size_t size() const { return samples_.size(); }
  [[nodiscard]] std::uint32_t sample_rate() const { return sample_rate_; }
  [[nodiscard]] const std::string& source() const { return source_; }
  [[nodiscard]] double duration_seconds() const {
    return static_cast<double>(samples_.size()) / sample_rate_;
  }

  // Same rate, new samples; provenance gets a suffix.
  [[nodiscard]] Signal derive(std::vector<double> samples, const std::string& step) const {
    return Signal(std::move(samples), sample_rate_, source_.empty() ? step : source_ + " | " + step);
  }

private:
  std::vector<double> samples_;
  std::uint32_t sample_rate_;
  std::string source_;
};

}  // namespace mesdr
