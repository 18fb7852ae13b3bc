// Acceptance checks. Each criterion prints one PASS/FAIL line; the exit
// status is non-zero when any selected criterion fails.
//
//   acceptance [--criterion N] [--unit-tests PATH] [--cli PATH]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <CLI11.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "mesdr/mesdr.hpp"
#include "support.hpp"

using namespace mesdr;
using testsupport::kPi;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Paths {
  std::string unit_tests;
  std::string cli;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Process {
  int code = -1;
  std::string out;
  double seconds = 0.0;
};

Process run_process(const std::string& command) {
  Process p;
  const auto t0 = Clock::now();
  FILE* pipe = ::popen(command.c_str(), "r");
  if (!pipe) return p;
  char buf[4096];
  std::size_t got = 0;
  while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) p.out.append(buf, got);
  const int status = ::pclose(pipe);
  p.seconds = seconds_since(t0);
  p.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return p;
}

std::string quoted(const std::string& s) { return "'" + s + "'"; }

std::filesystem::path work_dir() {
  static const std::filesystem::path dir = [] {
    auto p = std::filesystem::temp_directory_path() / ("mesdr_acceptance_" + std::to_string(::getpid()));
    std::filesystem::create_directories(p);
    return p;
  }();
  return dir;
}

double median_of(std::vector<double> v) {
  const std::size_t mid = (v.size() - 1) / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<long>(mid), v.end());
  return v[mid];
}

// 1: the unit suite passes inside its time budget.
Outcome criterion_1(const Paths& paths) {
  if (paths.unit_tests.empty()) return {false, "no --unit-tests binary given"};
  const Process p = run_process(quoted(paths.unit_tests) + " 2>&1");
  std::string summary = "unit suite exit " + std::to_string(p.code);
  const auto pos = p.out.rfind("test cases");
  if (pos != std::string::npos) {
    const auto line_start = p.out.rfind('\n', pos);
    const auto line_end = p.out.find('\n', pos);
    summary = p.out.substr(line_start + 1, line_end - line_start - 1);
  }
  return {p.code == 0 && p.seconds < 10.0, fmt("%s; %.2f s (budget 10 s)", summary.c_str(), p.seconds)};
}

// 2: bandwidth selection under AR(1) errors.
std::vector<double> sin2pi(std::size_t m) {
  std::vector<double> s(m);
  for (std::size_t i = 0; i < m; ++i) s[i] = std::sin(2.0 * kPi * static_cast<double>(i + 1) / static_cast<double>(m));
  return s;
}

// Mean squared error against the truth over design points in (0.25, 0.75),
// a region every grid bandwidth covers.
double ise(const std::vector<double>& y, const std::vector<double>& truth, double h) {
  const InteriorFit f = priestley_chao_fit(y, h);
  const double m = static_cast<double>(y.size());
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < f.fitted.size(); ++k) {
    const std::size_t idx = f.first + k;
    const double t = static_cast<double>(idx + 1) / m;
    if (t <= 0.25 || t >= 0.75) continue;
    acc += (f.fitted[k] - truth[idx]) * (f.fitted[k] - truth[idx]);
    ++count;
  }
  return acc / static_cast<double>(count);
}

Outcome criterion_2(const Paths&) {
  const auto t0 = Clock::now();
  const std::vector<std::size_t> sizes{500, 2000, 8000};
  constexpr std::size_t kReps = 50;
  std::vector<double> medians;
  std::vector<double> shares;
  for (std::size_t m : sizes) {
    const auto s = sin2pi(m);
    const auto grid = BandwidthGrid::for_length(m);
    std::vector<double> ratio(kReps);
    std::vector<int> wider(kReps);
    parallel_for(kReps, default_threads(), [&](std::size_t rep) {
      auto y = testsupport::ar1(m, 0.6, 0.1, 7000 * m + rep);
      for (std::size_t i = 0; i < m; ++i) y[i] += s[i];
      const double corrected = select_bandwidth(y, grid).h_hat;
      const double plain = select_bandwidth(y, grid, CvCorrection::none).h_hat;
      double best = INFINITY;
      double at_hat = NAN;
      for (double h : grid.values) {
        const double e = ise(y, s, h);
        best = std::min(best, e);
        if (h == corrected) at_hat = e;
      }
      ratio[rep] = at_hat / best;
      wider[rep] = corrected >= plain ? 1 : 0;
    });
    medians.push_back(median_of(ratio));
    shares.push_back(static_cast<double>(std::count(wider.begin(), wider.end(), 1)) / kReps);
  }
  bool pass = true;
  std::string detail;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    pass = pass && medians[i] <= 1.5 && shares[i] >= 0.8;
    if (i > 0) pass = pass && medians[i] <= medians[i - 1];
    detail += fmt("m=%zu: median ISE ratio %.3f, corrected>=plain %.0f%%; ", sizes[i], medians[i], 100.0 * shares[i]);
  }
  const double elapsed = seconds_since(t0);
  pass = pass && elapsed < 300.0;
  return {pass, detail + fmt("%.1f s (budget 300 s)", elapsed)};
}

// 3 and 4 share one subsampling run on pure noise.
struct NoiseRun {
  std::vector<double> centered;  // sqrt(b) (V_hat - V_n)
  double sd = 0.0;               // sqrt(2 sigma^4)
  double seconds = 0.0;
};

const NoiseRun& noise_run() {
  static const NoiseRun run = [] {
    const auto t0 = Clock::now();
    constexpr std::size_t n = 200000;
    constexpr double sigma2 = 0.01;
    const Signal x(testsupport::white(n, std::sqrt(sigma2), 424242), 44100);
    SubsampleConfig cfg;
    cfg.b = 500;
    cfg.k = 500;
    cfg.seed = 17;
    const BlockVarianceSample bs = subsample_distribution(x, cfg, GridSpec{}, default_threads());
    // With s = 0 the whole-series residual variance is the sample variance.
    const auto v = x.samples();
    double mean = 0.0;
    for (double e : v) mean += e;
    mean /= static_cast<double>(n);
    double vn = 0.0;
    for (double e : v) vn += (e - mean) * (e - mean);
    vn /= static_cast<double>(n - 1);
    NoiseRun r;
    for (double vb : bs.variances) r.centered.push_back(std::sqrt(static_cast<double>(cfg.b)) * (vb - vn));
    std::sort(r.centered.begin(), r.centered.end());
    r.sd = std::sqrt(2.0 * sigma2 * sigma2);
    r.seconds = seconds_since(t0);
    return r;
  }();
  return run;
}

Outcome criterion_3(const Paths&) {
  const NoiseRun& r = noise_run();
  const boost::math::normal_distribution<double> law(0.0, r.sd);
  const double k = static_cast<double>(r.centered.size());
  double ks = 0.0;
  for (std::size_t i = 0; i < r.centered.size(); ++i) {
    const double f = boost::math::cdf(law, r.centered[i]);
    ks = std::max({ks, std::abs(static_cast<double>(i + 1) / k - f), std::abs(f - static_cast<double>(i) / k)});
  }
  const double mean = std::accumulate(r.centered.begin(), r.centered.end(), 0.0) / k;
  double var = 0.0;
  for (double c : r.centered) var += (c - mean) * (c - mean);
  const double sd = std::sqrt(var / (k - 1.0));
  return {ks <= 0.08 && r.seconds < 120.0,
          fmt("KS distance %.4f (limit 0.08); centered mean %.2f sd, spread %.3f x nominal; %.1f s", ks,
              mean / r.sd, sd / r.sd, r.seconds)};
}

Outcome criterion_4(const Paths&) {
  const NoiseRun& r = noise_run();
  const boost::math::normal_distribution<double> law(0.0, r.sd);
  bool pass = r.seconds < 60.0;
  std::string detail;
  for (double g : {0.25, 0.5, 0.75}) {
    const double q = empirical_quantile(r.centered, g);
    const double target = boost::math::quantile(law, g);
    const double gap = std::abs(q - target) / r.sd;
    pass = pass && gap <= 0.1;
    detail += fmt("gamma %.2f: |gap| %.3f sd; ", g, gap);
  }
  return {pass, detail + fmt("limit 0.1 sd; %.1f s", r.seconds)};
}

// 5: order-statistic interval for the median, skewed dr draws.
Outcome criterion_5(const Paths&) {
  constexpr double nu = 40.0;
  constexpr double sigma2 = 0.01;
  const boost::math::chi_squared_distribution<double> chi(nu);
  const double true_median = -10.0 * std::log10(sigma2 * boost::math::median(chi) / nu);
  std::mt19937_64 g(55);
  std::chi_squared_distribution<double> draw(nu);
  int covered = 0;
  constexpr int kReps = 200;
  for (int rep = 0; rep < kReps; ++rep) {
    std::vector<double> dr(500);
    for (double& d : dr) d = -10.0 * std::log10(sigma2 * draw(g) / nu);
    const Interval ci = median_ci(dr, 0.90);
    if (ci.lower <= true_median && true_median <= ci.upper) ++covered;
  }
  const double rate = static_cast<double>(covered) / kReps;
  return {rate >= 0.85 && rate <= 0.95, fmt("coverage %.3f over %d reps (target [0.85, 0.95])", rate, kReps)};
}

// 6: compression sweep shape on drum-like material.
const std::vector<double> kSweepRatios{1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0};

Outcome criterion_6(const Paths&) {
  const auto t0 = Clock::now();
  // Hits every 0.5 s ramping from -40 to 0 dBFS over a -60 dBFS bed. The
  // 60 ms attacks are slow enough for the envelope to catch the peaks.
  const Signal s(testsupport::ramped_hits(60.0, 44100, 2718, -40.0, 0.0, 0.5, -60.0, 0.06, 0.08), 44100,
                 "ramped hits");
  SubsampleConfig cfg;
  cfg.b = 2205;
  cfg.k = 500;
  const SweepTable t = compression_sweep(s, {-12.0, -24.0}, kSweepRatios, cfg, GridSpec{}, CompressorConfig{},
                                         default_threads());
  const std::size_t nr = kSweepRatios.size();
  auto cell = [&](std::size_t thr, std::size_t r) -> const DrReport& { return t.rows[1 + thr * nr + r].report; };
  bool decreasing = true, below = true, apart = true;
  std::string curves;
  for (std::size_t thr = 0; thr < 2; ++thr) {
    curves += thr == 0 ? "T=-12:" : " T=-24:";
    for (std::size_t r = 0; r < nr; ++r) {
      curves += fmt(" %.2f", cell(thr, r).mesdr);
      if (r > 0 && !(cell(thr, r).mesdr < cell(thr, r - 1).mesdr)) decreasing = false;
    }
  }
  for (std::size_t r = 1; r < nr; ++r) {
    if (!(cell(1, r).mesdr < cell(0, r).mesdr)) below = false;
    if (kSweepRatios[r] >= 2.0) {
      const Interval& hi = *cell(0, r).ci90;
      const Interval& lo = *cell(1, r).ci90;
      if (lo.upper >= hi.lower) apart = false;
    }
  }
  const double elapsed = seconds_since(t0);
  return {decreasing && below && apart && elapsed < 900.0,
          fmt("decreasing %s, -24 below -12 %s, 90%% bands apart at r>=2 %s; %.1f s; ", decreasing ? "yes" : "no",
              below ? "yes" : "no", apart ? "yes" : "no", elapsed) +
              curves};
}

// 7: slope law on constant-power full-scale material.
Outcome criterion_7(const Paths&) {
  const Signal s(testsupport::square_bursts(60.0, 44100, 31), 44100, "square bursts");
  const std::vector<double> ratios(kSweepRatios.begin() + 1, kSweepRatios.end());
  SubsampleConfig cfg;
  cfg.b = 2205;
  cfg.k = 500;
  const SweepTable t =
      compression_sweep(s, {-12.0, -24.0}, ratios, cfg, GridSpec{}, CompressorConfig{}, default_threads());
  bool pass = true;
  std::string detail;
  for (std::size_t thr = 0; thr < 2; ++thr) {
    std::vector<double> x, y;
    for (std::size_t r = 0; r < ratios.size(); ++r) {
      x.push_back(std::log10(1.0 / ratios[r]));
      y.push_back(t.rows[1 + thr * ratios.size() + r].report.mesdr);
    }
    const testsupport::LineFit f = testsupport::fit_line(x, y);
    pass = pass && f.r2 >= 0.95 && f.slope > 0.0;
    detail += fmt("T=%g: slope %.2f dB/decade, R^2 %.4f; ", thr == 0 ? -12.0 : -24.0, f.slope, f.r2);
  }
  return {pass, detail + "limit R^2 >= 0.95"};
}

// 8: the comparison workflow end to end through the command-line tool.
Outcome criterion_8(const Paths& paths) {
  const MannWhitneyResult exact =
      mann_whitney(std::vector<double>{1, 2}, std::vector<double>{3, 4}, Alternative::a_less);
  const bool exact_ok = std::abs(exact.p - 1.0 / 6.0) <= 1e-12;
  if (paths.cli.empty()) return {false, "no --cli binary given"};

  const auto original = (work_dir() / "workflow.wav").string();
  const auto squeezed = (work_dir() / "workflow_r5.wav").string();
  write_wav16(original, Signal(testsupport::ramped_hits(30.0, 44100, 99), 44100));
  const std::string cli = quoted(paths.cli);
  const Process c = run_process(cli + " compress --threshold -24 --ratio 5 " + quoted(original) + " " +
                                quoted(squeezed) + " 2>/dev/null");
  if (c.code != 0) return {false, "compress failed with exit " + std::to_string(c.code)};
  const Process cmp = run_process(cli + " compare " + quoted(original) + " " + quoted(squeezed) + " 2>/dev/null");
  const Process self =
      run_process(cli + " compare --shared-seed " + quoted(original) + " " + quoted(original) + " 2>/dev/null");
  if (cmp.code != 0 || self.code != 0) return {false, "compare failed"};
  const Json a = Json::parse(cmp.out);
  const Json b = Json::parse(self.out);
  const double p_one = a["mann_whitney"]["first_greater"]["p"].get<double>();
  const double p_self = b["mann_whitney"]["two_sided"]["p"].get<double>();
  const bool pass = exact_ok && p_one <= 0.01 && p_self >= 0.99;
  return {pass, fmt("original vs ratio 5: one-sided p %.3g (verdict \"%s\"); self, shared seed: two-sided p %.4f; "
                    "exact {1,2} vs {3,4}: %.15f",
                    p_one, a["verdict"].get<std::string>().c_str(), p_self, exact.p)};
}

// 9: a three-minute file analyzed with the defaults inside a minute.
Outcome criterion_9(const Paths& paths) {
  if (paths.cli.empty()) return {false, "no --cli binary given"};
  const auto path = (work_dir() / "three_minutes.wav").string();
  write_wav16(path, Signal(testsupport::ramped_hits(180.0, 44100, 1234, -30.0, -1.0), 44100));
  const Process p = run_process(quoted(paths.cli) + " analyze " + quoted(path) + " 2>/dev/null");
  if (p.code != 0) return {false, "analyze failed with exit " + std::to_string(p.code)};
  const Json j = Json::parse(p.out);
  const bool defaults = j["config"]["subsample"]["b"] == 2205 && j["config"]["subsample"]["k"] == 500;
  return {defaults && p.seconds <= 60.0,
          fmt("n = %zu, b = 2205, K = 500 on %u worker(s): %.1f s (budget 60 s), MeSDR %.2f dB",
              j["signal"]["samples"].get<std::size_t>(), default_threads(), p.seconds,
              j["report"]["mesdr"].get<double>())};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MeSDR acceptance checks"};
  int only = 0;
  Paths paths;
  app.add_option("--criterion", only, "Run a single criterion (1-9)")->check(CLI::Range(1, 9));
  app.add_option("--unit-tests", paths.unit_tests, "Unit test binary");
  app.add_option("--cli", paths.cli, "mesdr command-line binary");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::function<Outcome(const Paths&)>> criteria{
      criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
      criterion_6, criterion_7, criterion_8, criterion_9};
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && static_cast<int>(i + 1) != only) continue;
    Outcome o;
    try {
      o = criteria[i](paths);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "criterion " << (i + 1) << ": " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail << std::endl;
    if (!o.pass) ++failures;
  }
  std::error_code ec;
  std::filesystem::remove_all(work_dir(), ec);
  return failures == 0 ? 0 : 1;
}
