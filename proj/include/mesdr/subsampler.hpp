#pragma once

// Random-block subsampling of smoothed residual variances, the median
// stochastic dynamic range (MeSDR) built from them, order-statistic
// confidence bands for the median, and the Mann-Whitney rank-sum test used to
// compare two recordings.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <unordered_set>
#include <utility>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "mesdr/detail/numeric.hpp"
#include "mesdr/error.hpp"
#include "mesdr/parallel.hpp"
#include "mesdr/signal.hpp"
#include "mesdr/smoother.hpp"

namespace mesdr {

struct SubsampleConfig {
  std::size_t b = 2205;  // 50 ms at 44.1 kHz
  std::size_t k = 500;
  std::uint64_t seed = 1;
  bool replacement = false;

  void validate(std::size_t n) const {
    if (b < 50) throw ArgumentError("subsample: block length b=" + std::to_string(b) + " must be >= 50");
    if (b >= n)
      throw ArgumentError("subsample: block length b=" + std::to_string(b) +
                          " must be below the signal length " + std::to_string(n));
    if (k < 1) throw ArgumentError("subsample: K must be >= 1");
    if (!replacement && k > n - b + 1)
      throw ArgumentError("subsample: K=" + std::to_string(k) + " exceeds the " + std::to_string(n - b + 1) +
                          " available block starts (sampling without replacement)");
  }
};

namespace detail {

// Unbiased integer in [0, range) from a 64-bit engine. Written out rather than
// using std::uniform_int_distribution, whose output is implementation-defined.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t range) {
  const std::uint64_t threshold = (0 - range) % range;  // 2^64 mod range
  for (;;) {
    const std::uint64_t r = rng();
    if (r >= threshold) return r % range;
  }
}

}  // namespace detail

/// K block starts, 1-based, uniform over {1, ..., n-b+1}, in draw order.
[[nodiscard]] inline std::vector<std::size_t> draw_blocks(std::size_t n, const SubsampleConfig& cfg) {
  detail::require(cfg.b >= 1 && cfg.b <= n, "draw_blocks: block length must be in [1, n]");
  detail::require(cfg.k >= 1, "draw_blocks: K must be >= 1");
  const std::uint64_t pool = n - cfg.b + 1;
  if (!cfg.replacement && cfg.k > pool)
    throw ArgumentError("draw_blocks: K=" + std::to_string(cfg.k) + " exceeds the " + std::to_string(pool) +
                        " available block starts (sampling without replacement)");
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> starts;
  starts.reserve(cfg.k);
  if (cfg.replacement) {
    for (std::size_t i = 0; i < cfg.k; ++i) starts.push_back(1 + detail::uniform_below(rng, pool));
  } else if (cfg.k <= pool / 2) {
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(cfg.k * 2);
    while (starts.size() < cfg.k) {
      const std::uint64_t s = detail::uniform_below(rng, pool);
      if (seen.insert(s).second) starts.push_back(1 + s);
    }
  } else {
    // Partial Fisher-Yates when a large fraction of the pool is requested.
    std::vector<std::size_t> all(pool);
    for (std::size_t i = 0; i < pool; ++i) all[i] = i + 1;
    for (std::size_t i = 0; i < cfg.k; ++i) {
      const std::size_t j = i + detail::uniform_below(rng, pool - i);
      std::swap(all[i], all[j]);
      starts.push_back(all[i]);
    }
  }
  return starts;
}

struct BlockEstimate {
  double variance = 0.0;
  double h_hat = std::numeric_limits<double>::quiet_NaN();
  bool degenerate = false;
};

namespace detail {

inline bool is_constant(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); });
}

}  // namespace detail

/// Smooths one block with its own cross-validated bandwidth and returns the
/// (count-1) variance of the interior residuals. Constant blocks are flagged
/// degenerate with variance 0 rather than treated as errors.
template <KernelFunction K = Epanechnikov>
[[nodiscard]] BlockEstimate block_variance(std::span<const double> block, const BandwidthGrid& grid,
                                           const K& kernel = {}) {
  if (block.size() < 50)
    throw ArgumentError("block_variance: block of " + std::to_string(block.size()) + " samples is below 50");
  BlockEstimate out;
  if (detail::is_constant(block)) {
    out.degenerate = true;
    return out;
  }
  try {
    const SmoothFit fit = select_bandwidth(block, grid, CvCorrection::autocorrelation, kernel);
    out.h_hat = fit.h_hat;
    out.variance = detail::sample_variance(fit.residuals);
  } catch (const DegenerateVarianceError&) {
    out.variance = 0.0;
  }
  if (!(out.variance > 0.0)) {
    out.variance = 0.0;
    out.degenerate = true;
  }
  return out;
}

/// The K subsample variances with everything needed to reproduce them.
struct BlockVarianceSample {
  SubsampleConfig config;
  GridSpec grid;
  std::size_t signal_length = 0;
  std::vector<std::size_t> starts;  // 1-based, draw order
  std::vector<double> variances;
  std::vector<double> dr_values;  // -10 log10(variance); +inf for degenerate blocks
  std::vector<double> per_block_h;  // NaN for degenerate blocks
  std::vector<std::uint8_t> degenerate;
  std::optional<std::string> warning;

  [[nodiscard]] std::size_t size() const { return starts.size(); }
  [[nodiscard]] std::size_t degenerate_count() const {
    return static_cast<std::size_t>(std::count(degenerate.begin(), degenerate.end(), std::uint8_t{1}));
  }
  [[nodiscard]] std::vector<double> finite_dr() const {
    std::vector<double> out;
    out.reserve(dr_values.size());
    for (double v : dr_values)
      if (std::isfinite(v)) out.push_back(v);
    return out;
  }
};

/// Draws all K block starts up front, then estimates the blocks in parallel.
/// The result is identical for any thread count.
template <KernelFunction K = Epanechnikov>
[[nodiscard]] BlockVarianceSample subsample_distribution(const Signal& signal, const SubsampleConfig& cfg,
                                                         const GridSpec& grid_spec = {}, unsigned threads = 1,
                                                         const K& kernel = {}) {
  const auto x = signal.samples();
  cfg.validate(x.size());
  const BandwidthGrid grid = BandwidthGrid::for_length(cfg.b, grid_spec);

  BlockVarianceSample out;
  out.config = cfg;
  out.grid = grid_spec;
  out.signal_length = x.size();
  out.starts = draw_blocks(x.size(), cfg);
  const std::size_t k = out.starts.size();
  out.variances.assign(k, 0.0);
  out.dr_values.assign(k, 0.0);
  out.per_block_h.assign(k, 0.0);
  out.degenerate.assign(k, 0);

  parallel_for(k, threads, [&](std::size_t i) {
    const BlockEstimate est = block_variance(x.subspan(out.starts[i] - 1, cfg.b), grid, kernel);
    out.variances[i] = est.variance;
    out.per_block_h[i] = est.h_hat;
    out.degenerate[i] = est.degenerate ? 1 : 0;
    out.dr_values[i] =
        est.degenerate ? std::numeric_limits<double>::infinity() : -10.0 * std::log10(est.variance);
  });

  const std::size_t deg = out.degenerate_count();
  if (2 * deg > k)
    out.warning = std::to_string(deg) + " of " + std::to_string(k) +
                  " blocks are degenerate (constant samples); the estimate rests on few blocks";
  return out;
}

/// Convenience overload for a prebuilt grid; the grid must be built for m = b.
template <KernelFunction K = Epanechnikov>
[[nodiscard]] BlockVarianceSample subsample_distribution(const Signal& signal, const SubsampleConfig& cfg,
                                                         const BandwidthGrid& grid, unsigned threads = 1,
                                                         const K& kernel = {}) {
  if (grid.length != cfg.b)
    throw ArgumentError("subsample_distribution: grid built for m=" + std::to_string(grid.length) +
                        " but b=" + std::to_string(cfg.b));
  return subsample_distribution(signal, cfg, grid.spec, threads, kernel);
}

/// Left-continuous inverse of the empirical CDF: the smallest order statistic
/// x_(k) with k/K >= gamma.
[[nodiscard]] inline double empirical_quantile(std::span<const double> values, double gamma) {
  detail::require(!values.empty(), "empirical_quantile: empty input");
  detail::require(gamma > 0.0 && gamma < 1.0, "empirical_quantile: gamma must be in (0, 1)");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  const double nd = static_cast<double>(n);
  auto k = static_cast<std::size_t>(std::ceil(gamma * nd));
  k = std::clamp<std::size_t>(k, 1, n);
  while (k > 1 && static_cast<double>(k - 1) / nd >= gamma) --k;
  while (k < n && static_cast<double>(k) / nd < gamma) ++k;
  return v[k - 1];
}

struct Interval {
  double level = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  std::size_t lower_rank = 0;  // 1-based ranks in the sorted sample
  std::size_t upper_rank = 0;
};

/// 1-based order-statistic ranks of the distribution-free median interval.
[[nodiscard]] inline std::pair<std::size_t, std::size_t> median_ci_ranks(std::size_t k, double level) {
  detail::require(level > 0.0 && level < 1.0, "median_ci: level must be in (0, 1)");
  const double z = boost::math::quantile(boost::math::normal_distribution<double>(), (1.0 + level) / 2.0);
  const double kd = static_cast<double>(k);
  const double half_width = z * std::sqrt(kd) / 2.0;
  const double lo = std::floor(kd / 2.0 - half_width);
  const double hi = std::ceil(kd / 2.0 + half_width) + 1.0;
  return {static_cast<std::size_t>(std::clamp(lo, 1.0, kd)), static_cast<std::size_t>(std::clamp(hi, 1.0, kd))};
}

[[nodiscard]] inline Interval median_ci(std::span<const double> values, double level) {
  if (values.size() < 30)
    throw ArgumentError("median_ci: need at least 30 values, got " + std::to_string(values.size()));
  for (double v : values) detail::require(std::isfinite(v), "median_ci: values must be finite");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  Interval ci;
  ci.level = level;
  std::tie(ci.lower_rank, ci.upper_rank) = median_ci_ranks(v.size(), level);
  ci.lower = v[ci.lower_rank - 1];
  ci.upper = v[ci.upper_rank - 1];
  return ci;
}

inline const std::vector<double>& default_quantile_levels() {
  static const std::vector<double> levels{0.05, 0.25, 0.5, 0.75, 0.95};
  return levels;
}

/// MeSDR and its uncertainty. Every dB figure includes the headroom term.
struct DrReport {
  double mesdr = 0.0;
  double median_dr = 0.0;  // before headroom correction
  double headroom_correction = 0.0;  // 20 log10(peak)
  double peak = 0.0;
  std::vector<std::pair<double, double>> quantiles;  // (gamma, value)
  std::optional<Interval> ci90;
  std::optional<Interval> ci95;
  std::size_t blocks = 0;
  std::size_t finite_blocks = 0;
  std::size_t degenerate_blocks = 0;
  std::optional<std::string> warning;
  SubsampleConfig config;
  GridSpec grid;
};

/// Median of the finite block DR values plus 20 log10(peak). Confidence
/// bands are reported once at least 30 blocks are finite.
[[nodiscard]] inline DrReport mesdr(const BlockVarianceSample& sample, double peak,
                                    const std::vector<double>& levels = default_quantile_levels()) {
  const std::vector<double> dr = sample.finite_dr();
  if (dr.empty())
    throw EstimationError("mesdr: all " + std::to_string(sample.size()) +
                          " blocks are degenerate (constant samples); no dynamic range can be estimated");
  detail::require(peak > 0.0 && std::isfinite(peak), "mesdr: peak must be positive");
  DrReport r;
  r.peak = peak;
  r.headroom_correction = 20.0 * std::log10(peak);
  r.median_dr = empirical_quantile(dr, 0.5);
  r.mesdr = r.median_dr + r.headroom_correction;
  std::vector<double> sorted_levels = levels;
  std::sort(sorted_levels.begin(), sorted_levels.end());
  for (double g : sorted_levels) r.quantiles.emplace_back(g, empirical_quantile(dr, g) + r.headroom_correction);
  r.blocks = sample.size();
  r.finite_blocks = dr.size();
  r.degenerate_blocks = sample.degenerate_count();
  r.warning = sample.warning;
  if (dr.size() >= 30) {
    for (auto [slot, level] : {std::pair{&r.ci90, 0.90}, std::pair{&r.ci95, 0.95}}) {
      Interval ci = median_ci(dr, level);
      ci.lower += r.headroom_correction;
      ci.upper += r.headroom_correction;
      *slot = ci;
    }
  } else {
    const std::string note = "confidence bands need at least 30 finite blocks, got " + std::to_string(dr.size());
    r.warning = r.warning ? *r.warning + "; " + note : note;
  }
  r.config = sample.config;
  r.grid = sample.grid;
  return r;
}

/// Finite block DR values shifted by the headroom term, the scale on which
/// two recordings are compared.
[[nodiscard]] inline std::vector<double> corrected_dr(const BlockVarianceSample& sample, double peak) {
  detail::require(peak > 0.0, "corrected_dr: peak must be positive");
  std::vector<double> dr = sample.finite_dr();
  const double shift = 20.0 * std::log10(peak);
  for (double& v : dr) v += shift;
  return dr;
}

enum class Alternative { two_sided, a_greater, a_less };

struct MannWhitneyResult {
  double u = 0.0;  // pairs (a_i, b_j) with a_i > b_j, ties counting one half
  double p = 1.0;
  bool exact = false;
  double z = 0.0;  // normal approximation only
};

namespace detail {

// counts[u] = number of rank arrangements of n1 + n2 distinct values giving U = u.
inline std::vector<double> mann_whitney_counts(std::size_t n1, std::size_t n2) {
  // f[i][j] over u, built by the recurrence f(i,j,u) = f(i-1,j,u-j) + f(i,j-1,u).
  const std::size_t umax = n1 * n2;
  std::vector<std::vector<std::vector<double>>> f(
      n1 + 1, std::vector<std::vector<double>>(n2 + 1));
  for (std::size_t i = 0; i <= n1; ++i) {
    for (std::size_t j = 0; j <= n2; ++j) {
      f[i][j].assign(i * j + 1, 0.0);
      if (i == 0 || j == 0) {
        f[i][j][0] = 1.0;
        continue;
      }
      for (std::size_t u = 0; u <= i * j; ++u) {
        double c = 0.0;
        if (u >= j && u - j <= (i - 1) * j) c += f[i - 1][j][u - j];
        if (u <= i * (j - 1)) c += f[i][j - 1][u];
        f[i][j][u] = c;
      }
    }
  }
  std::vector<double> out = f[n1][n2];
  out.resize(umax + 1, 0.0);
  return out;
}

}  // namespace detail

/// Wilcoxon-Mann-Whitney rank-sum test. Exact null distribution when both
/// samples have at most 20 values and no ties; otherwise the tie-corrected
/// normal approximation with continuity correction.
[[nodiscard]] inline MannWhitneyResult mann_whitney(std::span<const double> a, std::span<const double> b,
                                                    Alternative alt = Alternative::two_sided) {
  detail::require(!a.empty() && !b.empty(), "mann_whitney: both samples must be non-empty");
  const std::size_t n1 = a.size();
  const std::size_t n2 = b.size();
  const std::size_t n = n1 + n2;

  std::vector<std::pair<double, int>> pooled;
  pooled.reserve(n);
  for (double v : a) pooled.emplace_back(v, 0);
  for (double v : b) pooled.emplace_back(v, 1);
  std::sort(pooled.begin(), pooled.end(), [](const auto& x, const auto& y) { return x.first < y.first; });

  double rank_sum_a = 0.0;
  double tie_term = 0.0;  // sum of t^3 - t over tie groups
  bool ties = false;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && pooled[j].first == pooled[i].first) ++j;
    const double t = static_cast<double>(j - i);
    const double mid_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t q = i; q < j; ++q)
      if (pooled[q].second == 0) rank_sum_a += mid_rank;
    if (j - i > 1) {
      ties = true;
      tie_term += t * t * t - t;
    }
    i = j;
  }
  const double d1 = static_cast<double>(n1);
  const double d2 = static_cast<double>(n2);
  MannWhitneyResult r;
  r.u = rank_sum_a - d1 * (d1 + 1.0) / 2.0;

  if (n1 <= 20 && n2 <= 20 && !ties) {
    r.exact = true;
    const std::vector<double> counts = detail::mann_whitney_counts(n1, n2);
    double total = 0.0;
    for (double c : counts) total += c;
    const auto u = static_cast<std::size_t>(std::llround(r.u));
    double le = 0.0;
    double ge = 0.0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
      if (k <= u) le += counts[k];
      if (k >= u) ge += counts[k];
    }
    le /= total;
    ge /= total;
    switch (alt) {
      case Alternative::a_greater: r.p = ge; break;
      case Alternative::a_less: r.p = le; break;
      case Alternative::two_sided: r.p = std::min(1.0, 2.0 * std::min(le, ge)); break;
    }
    return r;
  }

  const double nd = static_cast<double>(n);
  const double mu = d1 * d2 / 2.0;
  const double var = d1 * d2 / 12.0 * ((nd + 1.0) - tie_term / (nd * (nd - 1.0)));
  if (!(var > 0.0)) {
    r.p = 1.0;
    return r;
  }
  const double sd = std::sqrt(var);
  const boost::math::normal_distribution<double> norm;
  const double diff = r.u - mu;
  switch (alt) {
    case Alternative::a_greater:
      r.z = (diff - 0.5) / sd;
      r.p = boost::math::cdf(boost::math::complement(norm, r.z));
      break;
    case Alternative::a_less:
      r.z = (diff + 0.5) / sd;
      r.p = boost::math::cdf(norm, r.z);
      break;
    case Alternative::two_sided: {
      r.z = std::copysign(std::max(std::abs(diff) - 0.5, 0.0), diff) / sd;
      r.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(norm, std::abs(r.z))));
      break;
    }
  }
  return r;
}

}  // namespace mesdr
