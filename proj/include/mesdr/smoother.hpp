#pragma once

// Priestley-Chao kernel regression on an equally spaced design i/m, with a
// global bandwidth picked by cross-validation whose residual mean square is
// inflated by an autocorrelation correction factor:
//
//   CV(h) = [1 - (1/(m h)) sum_{|j|<=M} K(j/(m h)) rho(j)]^-2 * mean(resid^2),
//   M = floor(sqrt(m h)).
//
// Fits are evaluated only at interior design points j/m in (h, 1-h), where
// the kernel window never crosses the ends of the sequence.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mesdr/detail/numeric.hpp"
#include "mesdr/error.hpp"

namespace mesdr {

template <class K>
concept KernelFunction = std::copy_constructible<K> && requires(const K& k, double u) {
  { k(u) } -> std::convertible_to<double>;
};

/// 0.75 (1 - u^2) on [-1, 1], zero elsewhere.
[[nodiscard]] constexpr double epanechnikov(double u) {
  return (u >= -1.0 && u <= 1.0) ? 0.75 * (1.0 - u * u) : 0.0;
}

struct Epanechnikov {
  constexpr double operator()(double u) const { return epanechnikov(u); }
};

struct KernelCheck {
  bool symmetric = false;
  bool nonnegative = false;
  bool compact = false;  // zero outside [-1, 1]
  double mass = 0.0;     // integral over [-1, 1]
  [[nodiscard]] bool ok() const {
    return symmetric && nonnegative && compact && std::abs(mass - 1.0) <= 1e-6;
  }
};

/// Numerical check of the kernel requirements (symmetric density on [-1, 1]).
template <KernelFunction K>
[[nodiscard]] KernelCheck check_kernel(const K& kernel, std::size_t resolution = 20000) {
  KernelCheck c;
  c.symmetric = c.nonnegative = c.compact = true;
  // Composite Simpson on [-1, 1].
  const std::size_t n = resolution + (resolution & 1u);
  const double step = 2.0 / static_cast<double>(n);
  double acc = 0.0;
  for (std::size_t i = 0; i <= n; ++i) {
    const double u = -1.0 + step * static_cast<double>(i);
    const double v = kernel(u);
    if (v < 0.0) c.nonnegative = false;
    if (std::abs(v - kernel(-u)) > 1e-12) c.symmetric = false;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    acc += w * v;
  }
  c.mass = acc * step / 3.0;
  for (double u : {1.0 + 1e-9, 1.05, 1.5, 2.0, 10.0}) {
    if (kernel(u) != 0.0 || kernel(-u) != 0.0) c.compact = false;
  }
  return c;
}

/// Bandwidth grid constants. The grid is log-spaced over
/// [c1 m^-1/5, min(c2 m^-1/5, h_max)].
struct GridSpec {
  double c1 = 0.15;
  double c2 = 3.0;
  std::size_t points = 25;
  double h_max = 0.25;  // keeps at least half of each sequence in the interior
};

struct BandwidthGrid {
  GridSpec spec;
  std::size_t length = 0;  // m the grid was built for
  std::vector<double> values;

  static BandwidthGrid for_length(std::size_t m, const GridSpec& spec = {}) {
    detail::require(spec.c1 > 0.0, "bandwidth grid: c1 must be positive");
    detail::require(spec.c2 > spec.c1, "bandwidth grid: c2 must exceed c1");
    detail::require(spec.points >= 2, "bandwidth grid: need at least 2 points");
    detail::require(spec.h_max > 0.0 && spec.h_max < 0.5, "bandwidth grid: h_max must be in (0, 0.5)");
    detail::require(m >= 2, "bandwidth grid: sequence too short");
    const double rate = std::pow(static_cast<double>(m), -0.2);
    const double lo = spec.c1 * rate;
    const double hi = std::min(spec.c2 * rate, spec.h_max);
    if (!(lo < hi))
      throw ArgumentError("bandwidth grid: lower end " + std::to_string(lo) +
                          " is not below the upper end " + std::to_string(hi) + " for m=" +
                          std::to_string(m));
    if (static_cast<double>(m) * lo < 2.0)
      throw ArgumentError("bandwidth grid: m*h < 2 at the lower end for m=" + std::to_string(m));
    BandwidthGrid g;
    g.spec = spec;
    g.length = m;
    g.values.resize(spec.points);
    const double llo = std::log(lo);
    const double lhi = std::log(hi);
    for (std::size_t k = 0; k < spec.points; ++k)
      g.values[k] = std::exp(llo + (lhi - llo) * static_cast<double>(k) / static_cast<double>(spec.points - 1));
    g.values.front() = lo;
    g.values.back() = hi;
    return g;
  }
};

/// Fitted values at the interior design points, 0-based indices
/// [first, first + fitted.size()).
struct InteriorFit {
  std::size_t first = 0;
  std::vector<double> fitted;
};

namespace detail {

inline void check_bandwidth(std::size_t m, double h) {
  if (!(h > 0.0 && h < 0.5))
    throw ArgumentError("bandwidth h=" + std::to_string(h) + " outside (0, 0.5)");
  if (static_cast<double>(m) * h < 2.0)
    throw ArgumentError("bandwidth h=" + std::to_string(h) + " gives m*h < 2 for m=" + std::to_string(m));
}

// 1-based design indices j with j/m in (h, 1-h), as a half-open 0-based range.
inline std::pair<std::size_t, std::size_t> interior_range(std::size_t m, double h) {
  const double md = static_cast<double>(m);
  std::size_t j = static_cast<std::size_t>(std::floor(md * h));
  while (j > 1 && static_cast<double>(j - 1) / md > h) --j;
  while (j <= m && !(static_cast<double>(j) / md > h)) ++j;
  std::size_t last = m - j + 1;  // symmetric candidate
  while (last >= j && !(static_cast<double>(last) / md < 1.0 - h)) --last;
  while (last + 1 <= m && static_cast<double>(last + 1) / md < 1.0 - h) ++last;
  if (last < j) return {j - 1, j - 1};
  return {j - 1, last};
}

}  // namespace detail

/// Priestley-Chao estimate at the interior design points:
///   s(t) = (1/(m h)) sum_i K((t - i/m)/h) y_i,  t = j/m.
/// Per-point cost is O(m h) thanks to the compact kernel support.
template <KernelFunction K = Epanechnikov>
[[nodiscard]] InteriorFit priestley_chao_fit(std::span<const double> y, double h, const K& kernel = {}) {
  const std::size_t m = y.size();
  detail::check_bandwidth(m, h);
  const double mh = static_cast<double>(m) * h;
  const auto radius = static_cast<std::ptrdiff_t>(std::floor(mh));
  std::vector<double> w(static_cast<std::size_t>(2 * radius + 1));
  for (std::ptrdiff_t d = -radius; d <= radius; ++d)
    w[static_cast<std::size_t>(d + radius)] = kernel(static_cast<double>(d) / mh) / mh;

  const auto [begin, end] = detail::interior_range(m, h);
  InteriorFit fit;
  fit.first = begin;
  fit.fitted.resize(end - begin);
  const auto mi = static_cast<std::ptrdiff_t>(m);
  for (std::size_t idx = begin; idx < end; ++idx) {
    const auto c = static_cast<std::ptrdiff_t>(idx);
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, c - radius);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(mi - 1, c + radius);
    fit.fitted[idx - begin] = detail::dot(w.data() + (lo - c + radius), y.data() + lo,
                                          static_cast<std::size_t>(hi - lo + 1));
  }
  return fit;
}

/// Literal estimator at an arbitrary t in (0, 1); no interior restriction.
template <KernelFunction K = Epanechnikov>
[[nodiscard]] double priestley_chao_at(std::span<const double> y, double h, double t, const K& kernel = {}) {
  detail::require(!y.empty(), "priestley_chao_at: empty input");
  detail::require(h > 0.0, "priestley_chao_at: bandwidth must be positive");
  const double m = static_cast<double>(y.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    acc += kernel((t - static_cast<double>(i + 1) / m) / h) * y[i];
  return acc / (m * h);
}

/// Autocovariances with the fixed 1/m divisor and the implied autocorrelations.
struct AutocorrSet {
  std::vector<double> gamma;  // lags 0..M
  std::vector<double> rho;
};

[[nodiscard]] inline AutocorrSet residual_autocorr(std::span<const double> residuals, std::size_t max_lag) {
  const std::size_t n = residuals.size();
  detail::require(n > 0, "residual_autocorr: empty residuals");
  if (2 * max_lag >= n)
    throw ArgumentError("residual_autocorr: lag count " + std::to_string(max_lag) +
                        " must be below half the residual count " + std::to_string(n));
  AutocorrSet out;
  out.gamma.resize(max_lag + 1);
  out.rho.resize(max_lag + 1);
  const double nd = static_cast<double>(n);
  for (std::size_t j = 0; j <= max_lag; ++j)
    out.gamma[j] = detail::dot(residuals.data(), residuals.data() + j, n - j) / nd;
  if (!(out.gamma[0] > 0.0))
    throw DegenerateVarianceError("residual_autocorr: residuals are identically zero");
  for (std::size_t j = 0; j <= max_lag; ++j) out.rho[j] = out.gamma[j] / out.gamma[0];
  out.rho[0] = 1.0;
  return out;
}

/// Whether the CV objective carries the autocorrelation correction factor.
enum class CvCorrection { autocorrelation, none };

/// One evaluated grid point. `cv` is +inf when the point is unusable, with the
/// reason in `failure`.
struct CvPoint {
  double h = 0.0;
  double cv = std::numeric_limits<double>::infinity();
  double residual_ms = 0.0;  // mean of squared interior residuals
  double correction = 1.0;   // multiplier applied to residual_ms
  std::size_t lags = 0;
  std::string failure;
  [[nodiscard]] bool valid() const { return failure.empty() && std::isfinite(cv); }
};

/// floor(sqrt(m h)), the autocorrelation lag cutoff.
[[nodiscard]] inline std::size_t lag_cutoff(std::size_t m, double h) {
  return static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(m) * h)));
}

namespace detail {

struct FitWithResiduals {
  InteriorFit fit;
  std::vector<double> residuals;
};

template <KernelFunction K>
FitWithResiduals fit_residuals(std::span<const double> y, double h, const K& kernel) {
  FitWithResiduals r{priestley_chao_fit(y, h, kernel), {}};
  r.residuals.resize(r.fit.fitted.size());
  for (std::size_t i = 0; i < r.residuals.size(); ++i)
    r.residuals[i] = y[r.fit.first + i] - r.fit.fitted[i];
  return r;
}

// Fills everything but `h`; throws on degenerate residuals.
template <KernelFunction K>
void score_residuals(CvPoint& pt, std::span<const double> residuals, std::size_t m,
                     CvCorrection mode, const K& kernel) {
  if (residuals.empty()) throw ArgumentError("no interior points at h=" + std::to_string(pt.h));
  pt.residual_ms = detail::pairwise_sum_squares(residuals) / static_cast<double>(residuals.size());
  pt.lags = lag_cutoff(m, pt.h);
  if (mode == CvCorrection::none) {
    if (!(pt.residual_ms > 0.0))
      throw DegenerateVarianceError("residuals are identically zero at h=" + std::to_string(pt.h));
    pt.correction = 1.0;
    pt.cv = pt.residual_ms;
    return;
  }
  if (pt.lags < 1) throw ArgumentError("lag cutoff M < 1 at h=" + std::to_string(pt.h));
  const AutocorrSet ac = residual_autocorr(residuals, pt.lags);
  const double mh = static_cast<double>(m) * pt.h;
  double s = kernel(0.0) * ac.rho[0];
  for (std::size_t j = 1; j <= pt.lags; ++j) s += 2.0 * kernel(static_cast<double>(j) / mh) * ac.rho[j];
  const double bracket = 1.0 - s / mh;
  if (!(bracket > 0.0)) {
    pt.correction = std::numeric_limits<double>::infinity();
    pt.cv = std::numeric_limits<double>::infinity();
    pt.failure = "correction factor base " + std::to_string(bracket) + " <= 0";
    return;
  }
  pt.correction = 1.0 / (bracket * bracket);
  pt.cv = pt.correction * pt.residual_ms;
}

}  // namespace detail

/// CV objective at one bandwidth. Returns +inf when the correction bracket is
/// non-positive; throws DegenerateVarianceError for zero residuals.
template <KernelFunction K = Epanechnikov>
[[nodiscard]] double cv_score(std::span<const double> y, double h,
                              CvCorrection mode = CvCorrection::autocorrelation, const K& kernel = {}) {
  const auto fr = detail::fit_residuals(y, h, kernel);
  CvPoint pt;
  pt.h = h;
  detail::score_residuals(pt, fr.residuals, y.size(), mode, kernel);
  return pt.cv;
}

/// Result of the bandwidth search on one sequence.
struct SmoothFit {
  std::size_t length = 0;  // m
  std::size_t first = 0;   // 0-based index of the first interior point
  std::vector<double> fitted;
  std::vector<double> residuals;
  double h_hat = 0.0;
  std::size_t m_lags = 0;
  AutocorrSet autocorr;
  std::vector<CvPoint> cv_curve;
  CvCorrection correction = CvCorrection::autocorrelation;
};

/// Evaluates CV on every grid value and keeps the argmin; ties go to the
/// smaller bandwidth.
template <KernelFunction K = Epanechnikov>
[[nodiscard]] SmoothFit select_bandwidth(std::span<const double> y, const BandwidthGrid& grid,
                                         CvCorrection mode = CvCorrection::autocorrelation,
                                         const K& kernel = {}) {
  if (grid.length != y.size())
    throw ArgumentError("select_bandwidth: grid built for m=" + std::to_string(grid.length) +
                        " but sequence has " + std::to_string(y.size()) + " samples");
  SmoothFit best;
  best.length = y.size();
  best.correction = mode;
  best.cv_curve.reserve(grid.values.size());
  detail::FitWithResiduals best_fit;
  std::size_t best_idx = grid.values.size();

  for (double h : grid.values) {
    CvPoint pt;
    pt.h = h;
    try {
      auto fr = detail::fit_residuals(y, h, kernel);
      detail::score_residuals(pt, fr.residuals, y.size(), mode, kernel);
      if (pt.valid() && (best_idx == grid.values.size() || pt.cv < best.cv_curve[best_idx].cv)) {
        best_idx = best.cv_curve.size();
        best_fit = std::move(fr);
      }
    } catch (const std::exception& e) {
      pt.cv = std::numeric_limits<double>::infinity();
      pt.failure = e.what();
    }
    best.cv_curve.push_back(std::move(pt));
  }

  if (best_idx == grid.values.size()) {
    bool all_degenerate = true;
    std::string reasons;
    for (const auto& pt : best.cv_curve) {
      if (pt.failure.find("identically zero") == std::string::npos) all_degenerate = false;
      reasons += "\n  h=" + std::to_string(pt.h) + ": " + pt.failure;
    }
    const std::string msg = "select_bandwidth: no usable grid point" + reasons;
    if (all_degenerate) throw DegenerateVarianceError(msg);
    throw EstimationError(msg);
  }

  best.h_hat = best.cv_curve[best_idx].h;
  best.m_lags = lag_cutoff(y.size(), best.h_hat);
  best.first = best_fit.fit.first;
  best.fitted = std::move(best_fit.fit.fitted);
  best.residuals = std::move(best_fit.residuals);
  if (best.m_lags >= 1 && 2 * best.m_lags < best.residuals.size())
    best.autocorr = residual_autocorr(best.residuals, best.m_lags);
  return best;
}

}  // namespace mesdr
