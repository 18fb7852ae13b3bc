#pragma once

// Hard-knee feed-forward RMS compressor and the threshold x ratio sweep that
// runs the MeSDR analysis on each compressed version.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "mesdr/error.hpp"
#include "mesdr/parallel.hpp"
#include "mesdr/power_metrics.hpp"
#include "mesdr/signal.hpp"
#include "mesdr/smoother.hpp"
#include "mesdr/subsampler.hpp"

namespace mesdr {

struct CompressorConfig {
  double threshold_db = -12.0;
  double ratio = 2.0;
  double env_window_ms = 10.0;  // trailing RMS window
  double attack_ms = 5.0;
  double release_ms = 100.0;
  double makeup_db = 0.0;

  void validate() const {
    detail::require(std::isfinite(threshold_db) && threshold_db <= 0.0,
                    "compressor: threshold_db must be <= 0 dBFS");
    detail::require(std::isfinite(ratio) && ratio >= 1.0, "compressor: ratio must be >= 1");
    detail::require(std::isfinite(env_window_ms) && env_window_ms > 0.0, "compressor: env_window must be > 0 ms");
    detail::require(std::isfinite(attack_ms) && attack_ms > 0.0, "compressor: attack_ms must be > 0");
    detail::require(std::isfinite(release_ms) && release_ms > 0.0, "compressor: release_ms must be > 0");
    detail::require(std::isfinite(makeup_db), "compressor: makeup_db must be finite");
  }
};

/// Static hard-knee law: 0 dB at or below threshold, otherwise the level is
/// brought to threshold + (level - threshold) / ratio.
[[nodiscard]] inline double static_gain_db(double level_db, double threshold_db, double ratio) {
  if (!(level_db > threshold_db)) return 0.0;
  return (threshold_db + (level_db - threshold_db) / ratio) - level_db;
}

struct Compressed {
  Signal signal;
  std::size_t clipped = 0;  // samples clipped to [-1, 1]
};

namespace detail {

inline double one_pole_coeff(double tau_ms, double rate) {
  return 1.0 - std::exp(-1000.0 / (tau_ms * rate));
}

}  // namespace detail

/// Envelope: trailing mean square over env_window (divided by the samples
/// seen so far near the start), taken to dB. Its excess over threshold is
/// smoothed in the dB domain with attack (rising) and release (falling)
/// one-pole filters, starting from the first sample's excess. The smoothed
/// level threshold + excess drives the static law.
[[nodiscard]] inline Compressed compress(const Signal& signal, const CompressorConfig& cfg) {
  cfg.validate();
  const auto x = signal.samples();
  const double rate = static_cast<double>(signal.sample_rate());
  const std::size_t window =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg.env_window_ms * rate / 1000.0)));
  const double a_att = detail::one_pole_coeff(cfg.attack_ms, rate);
  const double a_rel = detail::one_pole_coeff(cfg.release_ms, rate);
  const double slope = 1.0 / cfg.ratio - 1.0;
  // Excess below this is treated as zero so that released segments return to
  // exact unity gain instead of decaying asymptotically.
  constexpr double kExcessFloor = 1e-9;

  std::vector<double> y(x.size());
  std::size_t clipped = 0;
  double sum_sq = 0.0;
  double excess = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    sum_sq += x[t] * x[t];
    if (t >= window) sum_sq -= x[t - window] * x[t - window];
    if ((t + 1) % (64 * window) == 0) {
      // Periodic exact recomputation keeps the running sum from drifting.
      sum_sq = 0.0;
      for (std::size_t i = t + 1 - window; i <= t; ++i) sum_sq += x[i] * x[i];
    }
    const double ms = std::max(sum_sq, 0.0) / static_cast<double>(std::min(t + 1, window));
    const double level = ms > 0.0 ? 10.0 * std::log10(ms) : kNegInf;
    const double target = level > cfg.threshold_db ? level - cfg.threshold_db : 0.0;
    if (t == 0) {
      excess = target;
    } else {
      excess += (target > excess ? a_att : a_rel) * (target - excess);
    }
    if (excess < kExcessFloor) excess = 0.0;

    const double gain_db = excess * slope + cfg.makeup_db;
    double v = gain_db == 0.0 ? x[t] : x[t] * std::pow(10.0, gain_db / 20.0);
    if (v > 1.0) {
      v = 1.0;
      ++clipped;
    } else if (v < -1.0) {
      v = -1.0;
      ++clipped;
    }
    y[t] = v;
  }
  char label[96];
  std::snprintf(label, sizeof label, "compress(T=%g dB, r=%g, makeup=%g dB)", cfg.threshold_db, cfg.ratio,
                cfg.makeup_db);
  return {signal.derive(std::move(y), label), clipped};
}

struct SweepRow {
  std::optional<double> threshold_db;  // empty for the uncompressed original
  double ratio = 1.0;
  DrReport report;
  std::size_t clipped = 0;
};

struct SweepTable {
  CompressorConfig base;  // envelope settings shared by every cell
  std::vector<SweepRow> rows;
};

/// Runs the MeSDR analysis on the original and on every (threshold, ratio)
/// compressed version. All cells use the seed in `analysis`, so the same
/// block starts are drawn throughout.
template <KernelFunction K = Epanechnikov>
[[nodiscard]] SweepTable compression_sweep(const Signal& signal, const std::vector<double>& thresholds,
                                           const std::vector<double>& ratios, const SubsampleConfig& analysis,
                                           const GridSpec& grid = {}, const CompressorConfig& base = {},
                                           unsigned threads = 1, const K& kernel = {}) {
  detail::require(!thresholds.empty(), "compression_sweep: no thresholds");
  detail::require(!ratios.empty(), "compression_sweep: no ratios");
  for (double t : thresholds) {
    CompressorConfig c = base;
    c.threshold_db = t;
    c.validate();
  }
  for (double r : ratios) {
    CompressorConfig c = base;
    c.ratio = r;
    c.validate();
  }
  analysis.validate(signal.size());

  SweepTable table;
  table.base = base;
  {
    SweepRow row;
    row.report = mesdr(subsample_distribution(signal, analysis, grid, threads, kernel), peak(signal));
    table.rows.push_back(std::move(row));
  }
  for (double t : thresholds) {
    for (double r : ratios) {
      CompressorConfig c = base;
      c.threshold_db = t;
      c.ratio = r;
      Compressed out = compress(signal, c);
      SweepRow row;
      row.threshold_db = t;
      row.ratio = r;
      row.clipped = out.clipped;
      row.report = mesdr(subsample_distribution(out.signal, analysis, grid, threads, kernel), peak(out.signal));
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

}  // namespace mesdr
