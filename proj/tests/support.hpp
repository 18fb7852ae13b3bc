#pragma once

// Test-side oracles and synthetic signals. The oracles are deliberately
// written from the defining formulas, without calling into the library, so
// that agreement is evidence rather than tautology.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

namespace testsupport {

inline constexpr double kPi = 3.14159265358979323846;

inline double kernel_oracle(double u) { return std::abs(u) <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0; }

/// Literal Priestley-Chao sum at t: (1/(m h)) sum_{i=1..m} K((t - i/m)/h) y_i.
inline double pc_oracle(const std::vector<double>& y, double h, double t) {
  const double m = static_cast<double>(y.size());
  double s = 0.0;
  for (std::size_t i = 1; i <= y.size(); ++i) s += kernel_oracle((t - static_cast<double>(i) / m) / h) * y[i - 1];
  return s / (m * h);
}

/// Interior design indices (1-based) j with j/m in (h, 1-h).
inline std::vector<std::size_t> interior_oracle(std::size_t m, double h) {
  std::vector<std::size_t> out;
  for (std::size_t j = 1; j <= m; ++j) {
    const double t = static_cast<double>(j) / static_cast<double>(m);
    if (t > h && t < 1.0 - h) out.push_back(j);
  }
  return out;
}

/// gamma(j) = (1/n) sum_{t=1}^{n-j} e_t e_{t+j}.
inline std::vector<double> acov_oracle(const std::vector<double>& e, std::size_t max_lag) {
  std::vector<double> g(max_lag + 1, 0.0);
  for (std::size_t j = 0; j <= max_lag; ++j) {
    long double s = 0.0L;
    for (std::size_t t = 0; t + j < e.size(); ++t) s += static_cast<long double>(e[t]) * e[t + j];
    g[j] = static_cast<double>(s / e.size());
  }
  return g;
}

/// Corrected CV at h by brute force: literal fits at interior points, direct
/// autocorrelations, full two-sided lag sum.
inline double cv_oracle(const std::vector<double>& y, double h, bool corrected = true) {
  const std::size_t m = y.size();
  std::vector<double> e;
  for (std::size_t j : interior_oracle(m, h))
    e.push_back(y[j - 1] - pc_oracle(y, h, static_cast<double>(j) / static_cast<double>(m)));
  double rss = 0.0;
  for (double v : e) rss += v * v;
  rss /= static_cast<double>(e.size());
  if (!corrected) return rss;
  const double mh = static_cast<double>(m) * h;
  const auto lags = static_cast<std::size_t>(std::floor(std::sqrt(mh)));
  const auto g = acov_oracle(e, lags);
  double s = 0.0;
  for (long j = -static_cast<long>(lags); j <= static_cast<long>(lags); ++j)
    s += kernel_oracle(static_cast<double>(j) / mh) * g[static_cast<std::size_t>(std::labs(j))] / g[0];
  const double bracket = 1.0 - s / mh;
  if (bracket <= 0.0) return INFINITY;
  return rss / (bracket * bracket);
}

/// Exact Mann-Whitney p-value by listing every split of the pooled ranks.
/// alt: 0 two-sided, 1 a greater, -1 a less. Assumes no ties.
inline double mw_enumeration_oracle(const std::vector<double>& a, const std::vector<double>& b, int alt) {
  const std::size_t n1 = a.size();
  const std::size_t n = a.size() + b.size();
  // U for group a: number of (a, b) pairs with a above b, read off rank positions.
  auto u_of = [](const std::vector<bool>& in_a) {
    double u = 0.0;
    std::size_t b_seen = 0;
    for (std::size_t r = 0; r < in_a.size(); ++r) {
      if (in_a[r]) u += static_cast<double>(b_seen);
      else ++b_seen;
    }
    return u;
  };
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return pooled[x] < pooled[y]; });
  std::vector<bool> observed(n);
  for (std::size_t r = 0; r < n; ++r) observed[r] = order[r] < n1;
  const double u_obs = u_of(observed);

  std::vector<bool> mask(n, false);
  std::fill(mask.begin(), mask.begin() + static_cast<long>(n1), true);
  std::sort(mask.begin(), mask.end());
  double total = 0.0, le = 0.0, ge = 0.0;
  do {
    const double u = u_of(mask);
    total += 1.0;
    if (u <= u_obs) le += 1.0;
    if (u >= u_obs) ge += 1.0;
  } while (std::next_permutation(mask.begin(), mask.end()));
  if (alt > 0) return ge / total;
  if (alt < 0) return le / total;
  return std::min(1.0, 2.0 * std::min(le, ge) / total);
}

// Synthetic signals ---------------------------------------------------------

inline std::vector<double> sine(std::size_t n, double freq, double rate, double amp = 1.0, double phase = 0.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i)
    x[i] = amp * std::sin(2.0 * kPi * freq * static_cast<double>(i) / rate + phase);
  return x;
}

inline std::vector<double> white(std::size_t n, double sigma, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> nd(0.0, sigma);
  std::vector<double> x(n);
  for (double& v : x) v = nd(g);
  return x;
}

/// Stationary AR(1) with innovation sd chosen so the marginal sd is `sigma`.
inline std::vector<double> ar1(std::size_t n, double phi, double sigma, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  const double innov = sigma * std::sqrt(1.0 - phi * phi);
  std::vector<double> x(n);
  double prev = sigma * nd(g);
  for (std::size_t i = 0; i < n; ++i) {
    prev = phi * prev + innov * nd(g);
    x[i] = prev;
  }
  return x;
}

/// Drum-like test material: hits every `spacing_s` seconds whose peak level
/// ramps linearly in dB from `start_db` to `end_db`, over a noise bed.
/// Each hit has a raised-cosine attack, exponential decay and a mix of
/// damped low sine and noise.
inline std::vector<double> ramped_hits(double seconds, double rate, std::uint64_t seed, double start_db = -40.0,
                                       double end_db = 0.0, double spacing_s = 0.25, double bed_db = -60.0,
                                       double attack_s = 0.015, double decay_s = 0.12) {
  const auto n = static_cast<std::size_t>(seconds * rate);
  std::mt19937_64 g(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> x(n);
  const double bed = std::pow(10.0, bed_db / 20.0);
  for (double& v : x) v = bed * nd(g);
  const auto hits = static_cast<std::size_t>(seconds / spacing_s);
  const double attack = attack_s * rate;
  const double decay = decay_s * rate;
  const auto len = static_cast<std::size_t>((attack_s + 5.0 * decay_s) * rate);
  std::vector<double> shape(len);
  for (std::size_t h = 0; h < hits; ++h) {
    const double level_db = start_db + (end_db - start_db) * static_cast<double>(h) / static_cast<double>(hits - 1);
    const double amp = std::pow(10.0, level_db / 20.0);
    const auto start = static_cast<std::size_t>(static_cast<double>(h) * spacing_s * rate);
    const double f0 = 60.0 + 40.0 * (static_cast<double>(h % 3));
    double peak = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double t = static_cast<double>(i);
      const double env = (t < attack ? 0.5 - 0.5 * std::cos(kPi * t / attack) : 1.0) *
                         std::exp(-std::max(0.0, t - attack) / decay);
      shape[i] = env * (0.7 * std::sin(2.0 * kPi * f0 * t / rate) + 0.3 * nd(g));
      peak = std::max(peak, std::abs(shape[i]));
    }
    for (std::size_t i = 0; i < len && start + i < n; ++i) x[start + i] += amp * shape[i] / peak;
  }
  for (double& v : x) v = std::clamp(v, -1.0, 1.0);
  return x;
}

/// Constant-power full-scale bursts (square wave, |x| = 1 throughout a
/// burst) over a quiet bed. Burst onsets fade in over `ramp_s` seconds.
inline std::vector<double> square_bursts(double seconds, double rate, std::uint64_t seed, double burst_s = 1.0,
                                         double gap_s = 3.0, double ramp_s = 0.5, double bed_db = -50.0,
                                         double square_hz = 110.0) {
  const auto n = static_cast<std::size_t>(seconds * rate);
  std::mt19937_64 g(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  const double bed = std::pow(10.0, bed_db / 20.0);
  std::vector<double> x(n);
  const double period = burst_s + gap_s;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    const double phase = std::fmod(t, period);
    double v = bed * nd(g);
    if (phase < burst_s) {
      const double sq = std::sin(2.0 * kPi * square_hz * t) >= 0.0 ? 1.0 : -1.0;
      const double fade = phase < ramp_s ? phase / ramp_s : 1.0;
      v = fade * sq + (1.0 - fade) * v;
    }
    x[i] = std::clamp(v, -1.0, 1.0);
  }
  return x;
}

/// Per-process scratch directory.
inline std::filesystem::path scratch_dir() {
  static const std::filesystem::path dir = [] {
    auto p = std::filesystem::temp_directory_path() / ("mesdr_tests_" + std::to_string(::getpid()));
    std::filesystem::create_directories(p);
    return p;
  }();
  return dir;
}

/// Ordinary least squares of y on x: returns slope and R^2.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  return f;
}

}  // namespace testsupport
