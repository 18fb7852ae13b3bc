#pragma once

// Command-line front end. Kept in a header so the test suites can drive it
// in-process; tools/mesdr.cpp only forwards main() here.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mesdr/mesdr.hpp"

namespace mesdr::cli {

struct Options {
  // Shared analysis settings.
  std::uint64_t seed = 1;
  std::size_t b = 0;  // 0: 50 ms at the input rate
  std::size_t k = 500;
  bool replacement = false;
  double c1 = GridSpec{}.c1;
  double c2 = GridSpec{}.c2;
  std::size_t grid_points = GridSpec{}.points;
  double h_max = GridSpec{}.h_max;
  std::size_t channel = 0;
  std::optional<double> trim_db;
  unsigned threads = 0;  // 0: $MESDR_THREADS or hardware concurrency
  std::string format = "json";
  std::string out;
  bool timing = false;

  // Raw PCM input.
  bool raw = false;
  std::uint32_t rate = 0;
  std::uint16_t bits = 16;
  std::uint16_t channels = 1;

  // Command arguments.
  std::string input;                // single-file commands
  std::vector<std::string> inputs;  // every input, in order
  std::string output_wav;
  std::string dr_csv;
  CompressorConfig comp;
  std::vector<double> thresholds{-12.0, -24.0};
  std::vector<double> ratios{1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0};
  bool shared_seed = false;
  double alpha = 0.05;
  double window_ms = 50.0;
  std::size_t window = 0;  // samples; overrides window_ms when set
  std::optional<std::size_t> overlap;
  std::size_t segment = 4096;
};

namespace detail {

inline std::optional<PcmLayout> raw_layout(const Options& o) {
  if (!o.raw) return std::nullopt;
  if (o.rate == 0) throw ArgumentError("--raw needs --rate");
  return PcmLayout{o.rate, o.bits, o.channels};
}

inline Json raw_json(const Options& o) {
  if (!o.raw) return nullptr;
  return Json{{"rate", o.rate}, {"bits", o.bits}, {"channels", o.channels}};
}

inline Signal load(const Options& o, const std::string& path) {
  Signal s = load_pcm(path, o.channel, raw_layout(o));
  if (o.trim_db) s = trim_silence(s, *o.trim_db);
  return s;
}

inline unsigned threads(const Options& o) { return o.threads > 0 ? o.threads : default_threads(); }

inline GridSpec grid(const Options& o) { return GridSpec{o.c1, o.c2, o.grid_points, o.h_max}; }

inline SubsampleConfig subsample(const Options& o, const Signal& s, std::uint64_t seed) {
  SubsampleConfig c;
  c.b = o.b > 0 ? o.b : static_cast<std::size_t>(std::lround(0.05 * s.sample_rate()));
  c.k = o.k;
  c.seed = seed;
  c.replacement = o.replacement;
  return c;
}

inline Json signal_json(const Signal& s) {
  return Json{{"source", s.source()},
              {"sample_rate", s.sample_rate()},
              {"samples", s.size()},
              {"duration_s", s.duration_seconds()}};
}

// Settings shared by every command.
inline Json base_config(const Options& o, const std::string& command) {
  return Json{{"command", command},
              {"inputs", o.inputs},
              {"channel", o.channel},
              {"raw", raw_json(o)},
              {"trim_db", o.trim_db ? Json(*o.trim_db) : Json(nullptr)},
              {"format", o.format}};
}

inline void emit(const Options& o, std::ostream& out, const std::string& text) {
  if (o.out.empty()) {
    out << text;
    return;
  }
  std::ofstream f(o.out, std::ios::binary);
  if (!f) throw ArgumentError("cannot open --out file '" + o.out + "'");
  f << text;
}

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

struct Analysis {
  Signal signal;
  BlockVarianceSample sample;
  DrReport report;
};

inline Analysis analyze_one(const Options& o, const std::string& path, std::uint64_t seed) {
  Signal s = load(o, path);
  const SubsampleConfig cfg = subsample(o, s, seed);
  BlockVarianceSample sample = subsample_distribution(s, cfg, grid(o), threads(o));
  DrReport report = mesdr(sample, peak(s));
  return {std::move(s), std::move(sample), std::move(report)};
}

inline int cmd_analyze(const Options& o, std::ostream& out, std::ostream& err) {
  const auto t0 = std::chrono::steady_clock::now();
  Analysis a = analyze_one(o, o.inputs.at(0), o.seed);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  err << "analyze: " << a.sample.size() << " blocks in " << elapsed << " s\n";
  if (a.report.warning) err << "warning: " << *a.report.warning << "\n";

  Json config = base_config(o, "analyze");
  config["subsample"] = a.sample.config;
  config["grid"] = a.sample.grid;

  if (!o.dr_csv.empty()) {
    std::ofstream f(o.dr_csv);
    if (!f) throw ArgumentError("cannot open --dr-csv file '" + o.dr_csv + "'");
    write_csv_header(f, config);
    write_blocks_csv(f, a.sample);
  }
  if (o.format == "csv") {
    std::ostringstream ss;
    write_csv_header(ss, config);
    ss << "# mesdr: " << csv_number(a.report.mesdr) << "\n";
    ss << "# headroom_correction: " << csv_number(a.report.headroom_correction) << "\n";
    ss << "# degenerate_blocks: " << a.report.degenerate_blocks << "\n";
    if (o.timing) ss << "# wall_clock_s: " << elapsed << "\n";
    write_blocks_csv(ss, a.sample);
    emit(o, out, ss.str());
    return 0;
  }
  Json j{{"config", config}, {"signal", signal_json(a.signal)}, {"report", a.report}, {"sample", a.sample}};
  if (o.timing) j["wall_clock_s"] = elapsed;
  emit(o, out, dump(j));
  return 0;
}

inline int cmd_drs(const Options& o, std::ostream& out, std::ostream&) {
  const Signal s = load(o, o.inputs.at(0));
  DrsConfig cfg;
  cfg.window_len = o.window > 0 ? o.window
                                : std::max<std::size_t>(1, static_cast<std::size_t>(
                                                               std::lround(o.window_ms / 1000.0 * s.sample_rate())));
  cfg.overlap = o.overlap ? *o.overlap : cfg.window_len / 2;
  const DrsResult r = sequential_dr(s, cfg, threads(o));
  Json config = base_config(o, "drs");
  config["window_len"] = cfg.window_len;
  config["overlap"] = cfg.overlap;
  if (o.format == "csv") {
    std::ostringstream ss;
    write_csv_header(ss, config);
    ss << "drs,blocks,mean_rms,peak\n"
       << csv_number(r.drs) << ',' << r.blocks << ',' << csv_number(r.mean_rms) << ',' << csv_number(r.peak) << "\n";
    emit(o, out, ss.str());
    return 0;
  }
  emit(o, out,
       dump(Json{{"config", config},
                 {"signal", signal_json(s)},
                 {"drs", json_number(r.drs)},
                 {"blocks", r.blocks},
                 {"mean_rms", r.mean_rms},
                 {"peak", r.peak}}));
  return 0;
}

inline int cmd_compress(const Options& o, std::ostream& out, std::ostream& err) {
  o.comp.validate();
  const Signal s = load(o, o.inputs.at(0));
  const Compressed c = compress(s, o.comp);
  write_wav16(o.output_wav, c.signal);
  Json config = base_config(o, "compress");
  config["output"] = o.output_wav;
  config["compressor"] = o.comp;
  const Json side{{"config", config},
                  {"signal", signal_json(s)},
                  {"clipped", c.clipped},
                  {"input_peak", peak(s)},
                  {"output_peak", peak(c.signal)}};
  const std::string sidecar = o.output_wav + ".json";
  std::ofstream f(sidecar);
  if (!f) throw ArgumentError("cannot write sidecar '" + sidecar + "'");
  f << dump(side);
  if (c.clipped > 0) err << "warning: " << c.clipped << " samples clipped\n";
  if (!o.out.empty() || o.format == "json") emit(o, out, dump(side));
  return 0;
}

inline int cmd_compare(const Options& o, std::ostream& out, std::ostream& err) {
  mesdr::detail::require(o.alpha > 0.0 && o.alpha < 1.0, "--alpha must be in (0, 1)");
  const std::uint64_t seed_b = o.shared_seed ? o.seed : o.seed + 1;
  const Analysis a = analyze_one(o, o.inputs.at(0), o.seed);
  const Analysis b = analyze_one(o, o.inputs.at(1), seed_b);
  const auto da = corrected_dr(a.sample, a.report.peak);
  const auto db = corrected_dr(b.sample, b.report.peak);
  const MannWhitneyResult two = mann_whitney(da, db, Alternative::two_sided);
  const MannWhitneyResult greater = mann_whitney(da, db, Alternative::a_greater);
  const MannWhitneyResult less = mann_whitney(da, db, Alternative::a_less);
  std::string verdict = "no shift";
  if (greater.p <= o.alpha) verdict = "first more dynamic";
  else if (less.p <= o.alpha) verdict = "second more dynamic";
  err << "compare: " << verdict << "\n";

  Json config = base_config(o, "compare");
  config["subsample"] = Json{{"b", a.sample.config.b},
                             {"k", a.sample.config.k},
                             {"replacement", a.sample.config.replacement},
                             {"seeds", {o.seed, seed_b}},
                             {"shared_seed", o.shared_seed}};
  config["grid"] = a.sample.grid;
  config["alpha"] = o.alpha;
  if (o.format == "csv") {
    std::ostringstream ss;
    write_csv_header(ss, config);
    ss << "# verdict: " << verdict << "\n";
    ss << "test,u,p\n";
    ss << "two_sided," << csv_number(two.u) << ',' << csv_number(two.p) << "\n";
    ss << "first_greater," << csv_number(greater.u) << ',' << csv_number(greater.p) << "\n";
    ss << "first_less," << csv_number(less.u) << ',' << csv_number(less.p) << "\n";
    emit(o, out, ss.str());
    return 0;
  }
  emit(o, out,
       dump(Json{{"config", config},
                 {"first", {{"signal", signal_json(a.signal)}, {"report", a.report}}},
                 {"second", {{"signal", signal_json(b.signal)}, {"report", b.report}}},
                 {"mann_whitney", {{"two_sided", two}, {"first_greater", greater}, {"first_less", less}}},
                 {"verdict", verdict}}));
  return 0;
}

inline int cmd_sweep(const Options& o, std::ostream& out, std::ostream& err) {
  const Signal s = load(o, o.inputs.at(0));
  const SubsampleConfig cfg = subsample(o, s, o.seed);
  const SweepTable t = compression_sweep(s, o.thresholds, o.ratios, cfg, grid(o), o.comp, threads(o));
  Json config = base_config(o, "sweep");
  config["subsample"] = cfg;
  config["grid"] = grid(o);
  Json envelope = o.comp;
  envelope.erase("threshold_db");
  envelope.erase("ratio");
  config["compressor"] = envelope;
  config["thresholds"] = o.thresholds;
  config["ratios"] = o.ratios;
  err << "sweep: " << t.rows.size() << " cells\n";
  if (o.format == "csv") {
    std::ostringstream ss;
    write_csv_header(ss, config);
    write_sweep_csv(ss, t);
    emit(o, out, ss.str());
    return 0;
  }
  emit(o, out, dump(Json{{"config", config}, {"signal", signal_json(s)}, {"rows", t.rows}}));
  return 0;
}

inline int cmd_spectrum(const Options& o, std::ostream& out, std::ostream&) {
  const Signal s = load(o, o.inputs.at(0));
  const std::size_t overlap = o.overlap ? *o.overlap : o.segment / 2;
  const Spectrum sp = periodogram(s.samples(), s.sample_rate(), o.segment, overlap);
  Json config = base_config(o, "spectrum");
  config["segment"] = o.segment;
  config["overlap"] = overlap;
  config["nfft"] = sp.nfft;
  config["segments"] = sp.segments;
  if (o.format == "json") {
    Json power = Json::array();
    for (double v : sp.power_dbfs) power.push_back(json_number(v));
    emit(o, out, dump(Json{{"config", config}, {"signal", signal_json(s)}, {"freq_hz", sp.freqs}, {"power_db", power}}));
    return 0;
  }
  std::ostringstream ss;
  write_csv_header(ss, config);
  write_spectrum_csv(ss, sp);
  emit(o, out, ss.str());
  return 0;
}

inline int cmd_peaks(const Options& o, std::ostream& out, std::ostream&) {
  const PcmData pcm = read_pcm(o.inputs.at(0), raw_layout(o));
  const ChannelPeaks p = channel_peaks(pcm);
  Json config = base_config(o, "peaks");
  if (o.format == "csv") {
    std::ostringstream ss;
    write_csv_header(ss, config);
    ss << "channel,peak,peak_dbfs\n";
    for (std::size_t c = 0; c < p.peaks.size(); ++c)
      ss << c << ',' << csv_number(p.peaks[c]) << ',' << csv_number(dbfs(p.peaks[c])) << "\n";
    emit(o, out, ss.str());
    return 0;
  }
  Json levels = Json::array();
  for (double v : p.peaks) levels.push_back(json_number(dbfs(v)));
  emit(o, out,
       dump(Json{{"config", config},
                 {"sample_rate", pcm.layout.sample_rate},
                 {"frames", pcm.frames()},
                 {"peaks", p.peaks},
                 {"peaks_dbfs", levels},
                 {"loudest", p.loudest}}));
  return 0;
}

}  // namespace detail

/// Parses arguments and runs one command. Returns the process exit code:
/// 0 success, 1 argument error, 2 decode error, 3 estimation error.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Median stochastic dynamic range (MeSDR) of digital audio"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", "mesdr 1.0");

  app.add_option("--seed", o.seed, "RNG seed for block draws")->capture_default_str();
  app.add_option("--b", o.b, "Block length in samples (default: 50 ms at the input rate, 2205 at 44.1 kHz)");
  app.add_option("--k", o.k, "Number of random blocks")->capture_default_str();
  app.add_flag("--replacement", o.replacement, "Draw block starts with replacement");
  app.add_option("--c1", o.c1, "Bandwidth grid lower constant (h >= c1 m^-1/5)")->capture_default_str();
  app.add_option("--c2", o.c2, "Bandwidth grid upper constant (h <= c2 m^-1/5)")->capture_default_str();
  app.add_option("--grid-points", o.grid_points, "Number of grid bandwidths")->capture_default_str();
  app.add_option("--h-max", o.h_max, "Absolute cap on grid bandwidths")->capture_default_str();
  app.add_option("--channel", o.channel, "Zero-based channel to analyze")->capture_default_str();
  app.add_option("--trim-db", o.trim_db, "Trim leading/trailing 10 ms frames at or below this level (off by default)");
  app.add_option("--threads", o.threads,
                 std::string("Worker cap (default: $") + kThreadsEnv + " or hardware concurrency)");
  app.add_option("--format", o.format, "Output format")->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
  app.add_option("--out", o.out, "Write the report here instead of stdout");
  app.add_flag("--timing", o.timing, "Include wall-clock seconds in the report");
  app.add_flag("--raw", o.raw, "Input is headerless little-endian PCM");
  app.add_option("--rate", o.rate, "Raw PCM sample rate");
  app.add_option("--bits", o.bits, "Raw PCM bits per sample (16, 24, 32)")->capture_default_str();
  app.add_option("--channels", o.channels, "Raw PCM interleaved channel count")->capture_default_str();

  auto add_compressor = [&](CLI::App* sub, bool cell) {
    if (cell) {
      sub->add_option("--threshold", o.comp.threshold_db, "Threshold in dBFS")->capture_default_str();
      sub->add_option("--ratio", o.comp.ratio, "Compression ratio (>= 1)")->capture_default_str();
    }
    sub->add_option("--env-window", o.comp.env_window_ms, "RMS envelope window in ms")->capture_default_str();
    sub->add_option("--attack", o.comp.attack_ms, "Attack time constant in ms")->capture_default_str();
    sub->add_option("--release", o.comp.release_ms, "Release time constant in ms")->capture_default_str();
    sub->add_option("--makeup", o.comp.makeup_db, "Makeup gain in dB")->capture_default_str();
  };

  auto* analyze = app.add_subcommand("analyze", "MeSDR with confidence bands from random blocks");
  analyze->add_option("input", o.input, "Audio file")->required();
  analyze->add_option("--dr-csv", o.dr_csv, "Also write the per-block table to this CSV file");

  auto* drs = app.add_subcommand("drs", "Sequential DR: mean block RMS against the peak");
  drs->add_option("input", o.input, "Audio file")->required();
  drs->add_option("--window-ms", o.window_ms, "Block length in ms")->capture_default_str();
  drs->add_option("--window", o.window, "Block length in samples (overrides --window-ms)");
  drs->add_option("--overlap", o.overlap, "Overlap in samples (default: half the window)");

  auto* comp = app.add_subcommand("compress", "Apply the compressor and write 16-bit WAV plus a JSON sidecar");
  comp->add_option("input", o.input, "Audio file")->required();
  comp->add_option("output", o.output_wav, "Output WAV path")->required();
  add_compressor(comp, true);

  auto* compare = app.add_subcommand("compare", "Mann-Whitney comparison of two block DR distributions");
  compare->add_option("inputs", o.inputs, "Two audio files")->required()->expected(2);
  compare->add_flag("--shared-seed", o.shared_seed, "Use the same seed for both inputs");
  compare->add_option("--alpha", o.alpha, "Significance level for the verdict")->capture_default_str();

  auto* sweep = app.add_subcommand("sweep", "MeSDR over a threshold x ratio compression grid");
  sweep->add_option("input", o.input, "Audio file")->required();
  sweep->add_option("--thresholds", o.thresholds, "Thresholds in dBFS")->delimiter(',')->capture_default_str();
  sweep->add_option("--ratios", o.ratios, "Compression ratios")->delimiter(',')->capture_default_str();
  add_compressor(sweep, false);

  auto* spectrum = app.add_subcommand("spectrum", "Averaged Hann periodogram (CSV by default)");
  spectrum->add_option("input", o.input, "Audio file")->required();
  spectrum->add_option("--segment", o.segment, "Segment length in samples")->capture_default_str();
  spectrum->add_option("--overlap", o.overlap, "Overlap in samples (default: half the segment)");

  auto* peaks = app.add_subcommand("peaks", "Per-channel peak amplitudes");
  peaks->add_option("input", o.input, "Audio file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << app.version() << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  if (!o.input.empty()) o.inputs = {o.input};
  // Spectra are plot data, so CSV unless json was asked for explicitly.
  if (spectrum->parsed() && app.count("--format") == 0) o.format = "csv";

  try {
    if (analyze->parsed()) return detail::cmd_analyze(o, out, err);
    if (drs->parsed()) return detail::cmd_drs(o, out, err);
    if (comp->parsed()) return detail::cmd_compress(o, out, err);
    if (compare->parsed()) return detail::cmd_compare(o, out, err);
    if (sweep->parsed()) return detail::cmd_sweep(o, out, err);
    if (spectrum->parsed()) return detail::cmd_spectrum(o, out, err);
    if (peaks->parsed()) return detail::cmd_peaks(o, out, err);
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const DecodeError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const EstimationError& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}

}  // namespace mesdr::cli
