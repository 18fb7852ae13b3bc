#pragma once

// Descriptive power metrics: RMS power, dBFS levels, the sequential dynamic
// range (mean block RMS against the peak sample) and a Hann-windowed,
// overlapped, averaged periodogram.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <fftw3.h>

#include "mesdr/detail/numeric.hpp"
#include "mesdr/error.hpp"
#include "mesdr/parallel.hpp"
#include "mesdr/signal.hpp"

namespace mesdr {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Root mean square with the population (1/N) divisor.
[[nodiscard]] inline double rms_power(std::span<const double> samples) {
  detail::require(!samples.empty(), "rms_power: empty input");
  return std::sqrt(detail::pairwise_sum_squares(samples) / static_cast<double>(samples.size()));
}

/// 20*log10(p/p0). Zero power maps to -inf; negative power is an error.
[[nodiscard]] inline double dbfs(double p, double p0 = 1.0) {
  detail::require(p0 > 0.0, "dbfs: reference power must be positive");
  detail::require(p >= 0.0, "dbfs: power must be non-negative");
  if (p == 0.0) return kNegInf;
  return 20.0 * std::log10(p / p0);
}

/// "-inf dBFS" for the zero-power sentinel, fixed precision otherwise.
[[nodiscard]] inline std::string format_dbfs(double level, int precision = 2) {
  if (std::isinf(level) && level < 0) return "-inf dBFS";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f dBFS", precision, level);
  return buf;
}

[[nodiscard]] inline double peak(std::span<const double> samples) {
  detail::require(!samples.empty(), "peak: empty input");
  double p = 0.0;
  for (double v : samples) p = std::max(p, std::abs(v));
  return p;
}

[[nodiscard]] inline double peak(const Signal& signal) { return peak(signal.samples()); }

struct DrsConfig {
  std::size_t window_len = 2205;  // samples per block
  std::size_t overlap = 1102;     // samples shared by consecutive blocks

  [[nodiscard]] std::size_t hop() const { return window_len - overlap; }

  // 50 ms window, 50% overlap.
  static DrsConfig defaults_for(std::uint32_t sample_rate) {
    DrsConfig cfg;
    cfg.window_len = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.05 * sample_rate)));
    cfg.overlap = cfg.window_len / 2;
    return cfg;
  }
};

struct DrsResult {
  double drs = 0.0;       // dB below peak
  double mean_rms = 0.0;  // average block RMS
  double peak = 0.0;
  std::size_t blocks = 0;
};

/// Sequential dynamic range: -20*log10(mean block RMS / peak sample).
/// Blocks advance by window_len - overlap; a trailing partial block is dropped.
[[nodiscard]] inline DrsResult sequential_dr(const Signal& signal, const DrsConfig& cfg,
                                             unsigned threads = 1) {
  detail::require(cfg.window_len > 0, "sequential_dr: window_len must be positive");
  detail::require(cfg.overlap < cfg.window_len, "sequential_dr: overlap must be < window_len");
  const auto x = signal.samples();
  if (cfg.window_len > x.size())
    throw ArgumentError("sequential_dr: window of " + std::to_string(cfg.window_len) +
                        " samples exceeds signal length " + std::to_string(x.size()));
  const double pk = peak(x);
  detail::require(pk > 0.0, "sequential_dr: signal peak is zero");

  const std::size_t blocks = (x.size() - cfg.window_len) / cfg.hop() + 1;
  std::vector<double> rms(blocks);
  parallel_for(blocks, threads, [&](std::size_t k) {
    rms[k] = rms_power(x.subspan(k * cfg.hop(), cfg.window_len));
  });
  DrsResult out;
  out.blocks = blocks;
  out.peak = pk;
  out.mean_rms = detail::pairwise_sum(rms) / static_cast<double>(blocks);
  out.drs = -20.0 * std::log10(out.mean_rms / pk);
  return out;
}

struct Spectrum {
  std::vector<double> freqs;       // Hz, 0 .. sample_rate/2
  std::vector<double> power_dbfs;  // 10*log10 of the one-sided PSD; -inf where zero
  std::size_t segments = 0;
  std::size_t nfft = 0;
};

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex mu;
  return mu;
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace detail

/// Averaged periodogram with a periodic Hann window. Segments of
/// `segment_len` samples advance by segment_len - overlap and are zero-padded
/// to the next power of two. The PSD is one-sided and compensated for window
/// power, so a unit-variance white sequence sits near 10*log10(2/fs).
[[nodiscard]] inline Spectrum periodogram(std::span<const double> samples, double sample_rate,
                                          std::size_t segment_len, std::size_t overlap) {
  detail::require(sample_rate > 0.0, "periodogram: sample_rate must be positive");
  detail::require(segment_len >= 2, "periodogram: segment_len must be at least 2");
  detail::require(overlap < segment_len, "periodogram: overlap must be < segment_len");
  if (segment_len > samples.size())
    throw ArgumentError("periodogram: segment of " + std::to_string(segment_len) +
                        " samples is longer than the data (" + std::to_string(samples.size()) + ")");

  const std::size_t nfft = detail::next_pow2(segment_len);
  const std::size_t hop = segment_len - overlap;
  const std::size_t nseg = (samples.size() - segment_len) / hop + 1;
  const std::size_t nbins = nfft / 2 + 1;

  std::vector<double> window(segment_len);
  const double pi = std::acos(-1.0);
  for (std::size_t i = 0; i < segment_len; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * pi * static_cast<double>(i) / static_cast<double>(segment_len));
  const double window_power = detail::pairwise_sum_squares(window);

  std::vector<double> in(nfft, 0.0);
  std::vector<std::complex<double>> out(nbins);
  fftw_plan plan;
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(nfft), in.data(),
                                reinterpret_cast<fftw_complex*>(out.data()), FFTW_ESTIMATE);
  }

  std::vector<double> acc(nbins, 0.0);
  for (std::size_t s = 0; s < nseg; ++s) {
    const auto seg = samples.subspan(s * hop, segment_len);
    for (std::size_t i = 0; i < segment_len; ++i) in[i] = seg[i] * window[i];
    std::fill(in.begin() + static_cast<std::ptrdiff_t>(segment_len), in.end(), 0.0);
    fftw_execute(plan);
    for (std::size_t k = 0; k < nbins; ++k) acc[k] += std::norm(out[k]);
  }
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }

  Spectrum sp;
  sp.segments = nseg;
  sp.nfft = nfft;
  sp.freqs.resize(nbins);
  sp.power_dbfs.resize(nbins);
  const double scale = 1.0 / (sample_rate * window_power * static_cast<double>(nseg));
  for (std::size_t k = 0; k < nbins; ++k) {
    sp.freqs[k] = static_cast<double>(k) * sample_rate / static_cast<double>(nfft);
    double psd = acc[k] * scale;
    if (k != 0 && !(nfft % 2 == 0 && k == nfft / 2)) psd *= 2.0;
    sp.power_dbfs[k] = psd > 0.0 ? 10.0 * std::log10(psd) : kNegInf;
  }
  return sp;
}

}  // namespace mesdr
