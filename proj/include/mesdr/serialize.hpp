#pragma once

// JSON and CSV renderings of the analysis types. Non-finite numbers (the
// degenerate-block DR sentinel, undefined bandwidths) become JSON null and
// the literal strings inf / nan in CSV.

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mesdr/compressor.hpp"
#include "mesdr/power_metrics.hpp"
#include "mesdr/smoother.hpp"
#include "mesdr/subsampler.hpp"

namespace mesdr {

using Json = nlohmann::ordered_json;

[[nodiscard]] inline Json json_number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

[[nodiscard]] inline std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void to_json(Json& j, const GridSpec& g) {
  j = Json{{"c1", g.c1}, {"c2", g.c2}, {"points", g.points}, {"h_max", g.h_max}};
}

inline void to_json(Json& j, const SubsampleConfig& c) {
  j = Json{{"b", c.b}, {"k", c.k}, {"seed", c.seed}, {"replacement", c.replacement}};
}

inline void to_json(Json& j, const CompressorConfig& c) {
  j = Json{{"threshold_db", c.threshold_db}, {"ratio", c.ratio},         {"env_window_ms", c.env_window_ms},
           {"attack_ms", c.attack_ms},       {"release_ms", c.release_ms}, {"makeup_db", c.makeup_db}};
}

inline void to_json(Json& j, const Interval& ci) {
  j = Json{{"level", ci.level},
           {"lower", json_number(ci.lower)},
           {"upper", json_number(ci.upper)},
           {"lower_rank", ci.lower_rank},
           {"upper_rank", ci.upper_rank}};
}

inline Json optional_interval(const std::optional<Interval>& ci) {
  if (!ci) return nullptr;
  return Json(*ci);
}

inline void to_json(Json& j, const DrReport& r) {
  Json q = Json::array();
  for (const auto& [g, v] : r.quantiles) q.push_back(Json{{"gamma", g}, {"value", json_number(v)}});
  j = Json{{"mesdr", json_number(r.mesdr)},
           {"median_dr", json_number(r.median_dr)},
           {"headroom_correction", json_number(r.headroom_correction)},
           {"peak", r.peak},
           {"quantiles", std::move(q)},
           {"ci90", optional_interval(r.ci90)},
           {"ci95", optional_interval(r.ci95)},
           {"blocks", r.blocks},
           {"finite_blocks", r.finite_blocks},
           {"degenerate_blocks", r.degenerate_blocks},
           {"warning", r.warning ? Json(*r.warning) : Json(nullptr)},
           {"subsample", r.config},
           {"grid", r.grid}};
}

inline void to_json(Json& j, const BlockVarianceSample& s) {
  Json variances = Json::array();
  Json dr = Json::array();
  Json h = Json::array();
  for (std::size_t i = 0; i < s.size(); ++i) {
    variances.push_back(s.variances[i]);
    dr.push_back(json_number(s.dr_values[i]));
    h.push_back(json_number(s.per_block_h[i]));
  }
  j = Json{{"config", s.config},
           {"grid", s.grid},
           {"signal_length", s.signal_length},
           {"starts", s.starts},
           {"variances", std::move(variances)},
           {"dr_values", std::move(dr)},
           {"per_block_h", std::move(h)},
           {"degenerate_blocks", s.degenerate_count()},
           {"warning", s.warning ? Json(*s.warning) : Json(nullptr)}};
}

inline void to_json(Json& j, const MannWhitneyResult& m) {
  j = Json{{"u", m.u}, {"p", m.p}, {"exact", m.exact}, {"z", m.z}};
}

inline void to_json(Json& j, const SweepRow& row) {
  j = Json{{"threshold_db", row.threshold_db ? Json(*row.threshold_db) : Json(nullptr)},
           {"ratio", row.ratio},
           {"mesdr", json_number(row.report.mesdr)},
           {"ci90", optional_interval(row.report.ci90)},
           {"ci95", optional_interval(row.report.ci95)},
           {"peak", row.report.peak},
           {"degenerate_blocks", row.report.degenerate_blocks},
           {"clipped", row.clipped}};
}

/// Fit summary: selected bandwidth, lag cutoff, CV curve and autocorrelations.
inline void to_json(Json& j, const SmoothFit& f) {
  Json curve = Json::array();
  for (const auto& pt : f.cv_curve)
    curve.push_back(Json{{"h", pt.h},
                         {"cv", json_number(pt.cv)},
                         {"residual_ms", json_number(pt.residual_ms)},
                         {"correction", json_number(pt.correction)},
                         {"lags", pt.lags},
                         {"failure", pt.failure.empty() ? Json(nullptr) : Json(pt.failure)}});
  j = Json{{"m", f.length},
           {"correction", f.correction == CvCorrection::autocorrelation ? "autocorrelation" : "none"},
           {"h_hat", f.h_hat},
           {"m_lags", f.m_lags},
           {"interior_first", f.first},
           {"interior_count", f.residuals.size()},
           {"residual_variance", detail::sample_variance(f.residuals)},
           {"rho", f.autocorr.rho},
           {"cv_curve", std::move(curve)}};
}

inline void write_cv_curve_csv(std::ostream& os, const SmoothFit& f) {
  os << "h,cv\n";
  for (const auto& pt : f.cv_curve) os << csv_number(pt.h) << ',' << csv_number(pt.cv) << '\n';
}

/// Per-block table: start, variance, dr, h, degenerate.
inline void write_blocks_csv(std::ostream& os, const BlockVarianceSample& s) {
  os << "start,variance,dr,h,degenerate\n";
  for (std::size_t i = 0; i < s.size(); ++i)
    os << s.starts[i] << ',' << csv_number(s.variances[i]) << ',' << csv_number(s.dr_values[i]) << ','
       << csv_number(s.per_block_h[i]) << ',' << int(s.degenerate[i]) << '\n';
}

/// One line per cell; the original has an empty threshold and ratio 1.
inline void write_sweep_csv(std::ostream& os, const SweepTable& t) {
  os << "threshold_db,ratio,mesdr,ci90_lo,ci90_hi,ci95_lo,ci95_hi,clipped\n";
  auto ci = [](const std::optional<Interval>& c, bool upper) {
    return c ? csv_number(upper ? c->upper : c->lower) : std::string("nan");
  };
  for (const auto& row : t.rows) {
    os << (row.threshold_db ? csv_number(*row.threshold_db) : std::string()) << ',' << csv_number(row.ratio) << ','
       << csv_number(row.report.mesdr) << ',' << ci(row.report.ci90, false) << ',' << ci(row.report.ci90, true)
       << ',' << ci(row.report.ci95, false) << ',' << ci(row.report.ci95, true) << ',' << row.clipped << '\n';
  }
}

inline void write_spectrum_csv(std::ostream& os, const Spectrum& sp) {
  os << "freq_hz,power_db\n";
  for (std::size_t k = 0; k < sp.freqs.size(); ++k)
    os << csv_number(sp.freqs[k]) << ',' << csv_number(sp.power_dbfs[k]) << '\n';
}

/// Writes each top-level key of `config` as a "# key: value" comment line.
inline void write_csv_header(std::ostream& os, const Json& config) {
  for (const auto& [key, value] : config.items()) os << "# " << key << ": " << value.dump() << '\n';
}

}  // namespace mesdr
