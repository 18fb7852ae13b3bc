#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace mesdr::detail {

// Pairwise (cascade) summation. The result depends only on the input order,
// never on how the caller partitioned work, so serial and threaded callers that
// collect per-item values first and then reduce here agree bit for bit.
inline double pairwise_sum(std::span<const double> x) {
  constexpr std::size_t kLeaf = 64;
  if (x.size() <= kLeaf) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
  }
  const std::size_t half = x.size() / 2;
  return pairwise_sum(x.first(half)) + pairwise_sum(x.subspan(half));
}

inline double pairwise_sum_squares(std::span<const double> x) {
  constexpr std::size_t kLeaf = 64;
  if (x.size() <= kLeaf) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
  }
  const std::size_t half = x.size() / 2;
  return pairwise_sum_squares(x.first(half)) + pairwise_sum_squares(x.subspan(half));
}

inline double mean(std::span<const double> x) {
  return pairwise_sum(x) / static_cast<double>(x.size());
}

// Unbiased (n-1) variance around the sample mean. Two-pass for accuracy.
inline double sample_variance(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean(x);
  double acc = 0.0;
  double comp = 0.0;
  for (double v : x) {
    const double d = v - m;
    acc += d * d;
    comp += d;
  }
  // Corrected two-pass: subtracts the residual rounding in the mean.
  const double n = static_cast<double>(x.size());
  return (acc - comp * comp / n) / (n - 1.0);
}

// Dot product over a contiguous window. The simd reduction fixes the
// association order at compile time, so results are reproducible run to run.
inline double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
#pragma omp simd reduction(+ : acc)
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace mesdr::detail
