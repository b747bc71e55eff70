#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "coreset/bounds.hpp"
#include "coreset/coresets.hpp"
#include "coreset/models.hpp"
#include "coreset/parallel.hpp"
#include "coreset/quadrature.hpp"
#include "coreset/stats.hpp"
#include "coreset/svg.hpp"
#include "coreset/weights.hpp"

namespace coreset {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind { fig2, fig2_scaled, fig3, bounds_suite, diagnostics };
enum class ModelKind { cauchy, logreg };
enum class MSchedule { log_n, sqrt_n, half_n, five_plus_two_log_n };

inline std::string to_string(ExperimentKind e) {
  switch (e) {
    case ExperimentKind::fig2: return "fig2";
    case ExperimentKind::fig2_scaled: return "fig2_scaled";
    case ExperimentKind::fig3: return "fig3";
    case ExperimentKind::bounds_suite: return "bounds_suite";
    case ExperimentKind::diagnostics: return "diagnostics";
  }
  return "?";
}

inline std::string to_string(ModelKind m) {
  return m == ModelKind::cauchy ? "cauchy" : "logreg";
}

inline std::string to_string(MSchedule s) {
  switch (s) {
    case MSchedule::log_n: return "log_n";
    case MSchedule::sqrt_n: return "sqrt_n";
    case MSchedule::half_n: return "half_n";
    case MSchedule::five_plus_two_log_n: return "five_plus_two_log_n";
  }
  return "?";
}

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::fig2;
  ModelKind model = ModelKind::cauchy;
  std::vector<int> n_grid = {100, 316, 1000, 3162, 10000, 31623};
  std::vector<MSchedule> schedules = {MSchedule::log_n, MSchedule::sqrt_n,
                                      MSchedule::half_n};
  int trials = 0;          // 0 selects the per-experiment default
  std::uint64_t seed = 20240817;
  int sample_count = 1000; // S for the subsample-optimize discretization
  std::string output_dir = "out";
  bool full = false;       // fig3: restore the full 70 trials
  double log_base = 2.718281828459045;  // base of the M schedules
  int threads = 0;         // 0 selects hardware concurrency
  int bounds_configs = 200;
  bool self_test_negate_lower = false;

  int resolved_trials() const {
    if (trials > 0) return trials;
    switch (experiment) {
      case ExperimentKind::fig3: return full ? 70 : 20;
      case ExperimentKind::diagnostics: return 100;
      default: return 10;
    }
  }

  int resolved_threads() const {
    if (threads > 0) return threads;
    const unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 2;
  }

  void validate() const {
    if (n_grid.empty()) throw ConfigError("n_grid must be nonempty");
    for (std::size_t i = 0; i < n_grid.size(); ++i) {
      if (n_grid[i] < 1) throw ConfigError("n_grid entries must be >= 1");
      if (i > 0 && n_grid[i] <= n_grid[i - 1])
        throw ConfigError("n_grid must be strictly increasing");
    }
    if (trials < 0) throw ConfigError("trials must be >= 1");
    if (sample_count < 1) throw ConfigError("samples must be >= 1");
    if (!(log_base > 1.0)) throw ConfigError("log base must exceed 1");
    if (schedules.empty()) throw ConfigError("need at least one M schedule");
    if (output_dir.empty()) throw ConfigError("output dir must be set");
  }
};

inline int schedule_m(MSchedule s, int n, double log_base) {
  const double ln = std::log(static_cast<double>(n)) / std::log(log_base);
  double v = 1.0;
  switch (s) {
    case MSchedule::log_n: v = ln; break;
    case MSchedule::sqrt_n: v = std::sqrt(static_cast<double>(n)); break;
    case MSchedule::half_n: v = 0.5 * n; break;
    case MSchedule::five_plus_two_log_n: v = 5.0 + 2.0 * ln; break;
  }
  return static_cast<int>(std::llround(std::max(1.0, v)));
}

struct ExperimentRecord {
  ModelKind model = ModelKind::cauchy;
  std::string algorithm;
  int n = 0, m = 0, trial = 0;
  double kl_forward = 0.0, kl_reverse = 0.0, kl_min = 0.0, kl_max = 0.0;
  std::optional<double> alpha_star;
  std::optional<double> nnls_objective;
  long runtime_ms = 0;
  bool ok = true;
  std::string error;
};

inline constexpr const char* kRecordHeader =
    "model,algorithm,N,M,trial,kl_forward,kl_reverse,kl_min,kl_max,alpha_star,"
    "nnls_objective,runtime_ms,status";

namespace detail {

inline std::string fmt(double v) {
  char b[40];
  std::snprintf(b, sizeof(b), "%.17g", v);
  return b;
}

inline std::string opt_field(const std::optional<double>& v) {
  return v ? fmt(*v) : std::string();
}

inline std::string record_row(const ExperimentRecord& r) {
  std::ostringstream os;
  os << to_string(r.model) << ',' << r.algorithm << ',' << r.n << ',' << r.m << ','
     << r.trial << ',';
  if (r.ok)
    os << fmt(r.kl_forward) << ',' << fmt(r.kl_reverse) << ',' << fmt(r.kl_min) << ','
       << fmt(r.kl_max) << ',';
  else
    os << ",,,,";
  os << opt_field(r.alpha_star) << ',' << opt_field(r.nnls_objective) << ','
     << r.runtime_ms << ',' << (r.ok ? "ok" : "failed");
  return os.str();
}

// data stream shared by every experiment: one dataset per (model, N, trial)
inline Rng data_rng(std::uint64_t seed, ModelKind model, int n, int trial) {
  return Rng(seed)
      .child(0x11)
      .child(static_cast<std::uint64_t>(model))
      .child(static_cast<std::uint64_t>(n))
      .child(static_cast<std::uint64_t>(trial));
}

inline Rng algo_rng(std::uint64_t seed, ModelKind model, int n, int trial, int stage) {
  return Rng(seed)
      .child(0x22)
      .child(static_cast<std::uint64_t>(model))
      .child(static_cast<std::uint64_t>(n))
      .child(static_cast<std::uint64_t>(trial))
      .child(static_cast<std::uint64_t>(stage));
}

inline std::unique_ptr<PotentialModel> make_model(ModelKind kind, int n, Rng rng) {
  if (kind == ModelKind::cauchy)
    return std::make_unique<CauchyLocationModel>(generate_cauchy_data(n, 5.0, rng));
  return std::make_unique<LogRegModel>(generate_logreg_data(n, {1.0, 6.0}, rng));
}

inline long elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now() - start)
      .count();
}

inline void write_lines(const std::string& path, std::span<const std::string> lines) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  for (const auto& l : lines) os << l << '\n';
}

}  // namespace detail

struct ScheduleSummary {
  MSchedule schedule;
  std::vector<int> n_values;
  std::vector<double> mean_kl;     // mean over ok trials of the plotted statistic
  std::vector<double> stderr_kl;
  int failures = 0;
  LinearFit loglog_fit;            // log kl vs log N (fig2)
  LinearFit semilog_fit;           // kl vs ln(N/M) (fig2_scaled) or ln N (fig3)
  double theory_constant = 0.0;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<ExperimentRecord> records;
  std::vector<ScheduleSummary> summaries;
  int violations = 0;  // bounds_suite only
  std::string records_path, summary_path, plot_path;
};

namespace detail {

inline void write_meta(const ExperimentConfig& cfg, const std::string& dir) {
  std::ostringstream os;
  os << "{\n"
     << "  \"experiment\": \"" << to_string(cfg.experiment) << "\",\n"
     << "  \"model\": \"" << to_string(cfg.model) << "\",\n"
     << "  \"n_grid\": [";
  for (std::size_t i = 0; i < cfg.n_grid.size(); ++i)
    os << (i ? "," : "") << cfg.n_grid[i];
  os << "],\n"
     << "  \"m_schedules\": [";
  for (std::size_t i = 0; i < cfg.schedules.size(); ++i)
    os << (i ? "," : "") << '"' << to_string(cfg.schedules[i]) << '"';
  os << "],\n"
     << "  \"trials\": " << cfg.resolved_trials() << ",\n"
     << "  \"seed\": " << cfg.seed << ",\n"
     << "  \"samples\": " << cfg.sample_count << ",\n"
     << "  \"log_base\": " << fmt(cfg.log_base) << ",\n"
     << "  \"full\": " << (cfg.full ? "true" : "false") << "\n"
     << "}";
  std::ofstream f(dir + "/meta.json", std::ios::binary);
  f << os.str() << "\n";
}

inline std::vector<std::string> schedule_colors() {
  return {"#000000", "#1f4fd8", "#d82222", "#1d8a4a"};
}

}  // namespace detail

// Fig. 2 family: importance-weighted coresets across the N grid and M
// schedules, with optional post-hoc optimal scaling. Emits per-trial records,
// per-schedule means with fitted slopes, and a plot with least-squares-fitted
// theory overlays (constants only; the exponents come from the theory).
inline ExperimentResult run_fig2(const ExperimentConfig& cfg) {
  if (cfg.experiment != ExperimentKind::fig2 &&
      cfg.experiment != ExperimentKind::fig2_scaled)
    throw ConfigError("run_fig2 requires experiment fig2 or fig2_scaled");
  cfg.validate();
  const bool scaled = cfg.experiment == ExperimentKind::fig2_scaled;
  const int trials = cfg.resolved_trials();
  const auto& ns = cfg.n_grid;
  const auto& scheds = cfg.schedules;

  const int total = static_cast<int>(ns.size() * scheds.size()) * trials;
  std::vector<ExperimentRecord> records(static_cast<std::size_t>(total));

  parallel_for_indexed(total, cfg.resolved_threads(), [&](int task) {
    const int t = task % trials;
    const int si = (task / trials) % static_cast<int>(scheds.size());
    const int ni = task / (trials * static_cast<int>(scheds.size()));
    const int n = ns[static_cast<std::size_t>(ni)];
    const MSchedule sched = scheds[static_cast<std::size_t>(si)];
    const int m = schedule_m(sched, n, cfg.log_base);

    ExperimentRecord rec;
    rec.model = cfg.model;
    rec.algorithm = scaled ? "scaled_importance" : "importance";
    rec.n = n;
    rec.m = m;
    rec.trial = t;
    const auto start = std::chrono::steady_clock::now();
    try {
      auto model = detail::make_model(cfg.model, n, detail::data_rng(cfg.seed, cfg.model, n, t));
      const auto probs =
          importance_probabilities(*model, ProbabilityMode::x_squared_thresholded);
      Rng rng = detail::algo_rng(cfg.seed, cfg.model, n, t, si);
      CoresetWeights w = importance_weighted(probs, m, rng);
      if (scaled) {
        const auto os = optimal_scale(*model, w);
        rec.alpha_star = os.alpha_star;
        w = w.scaled(os.alpha_star);
      }
      const KlPair kp = kl_pair(*model, w);
      rec.kl_forward = kp.forward;
      rec.kl_reverse = kp.reverse;
      rec.kl_min = kp.min();
      rec.kl_max = kp.max();
      rec.ok = std::isfinite(kp.forward) && std::isfinite(kp.reverse) &&
               kp.forward >= 0.0 && kp.reverse >= 0.0;
    } catch (const std::exception& e) {
      rec.ok = false;
      rec.error = e.what();
    }
    rec.runtime_ms = detail::elapsed_ms(start);
    records[static_cast<std::size_t>(task)] = rec;
  });

  ExperimentResult out;
  out.config = cfg;
  out.records = std::move(records);

  for (std::size_t si = 0; si < scheds.size(); ++si) {
    ScheduleSummary sum;
    sum.schedule = scheds[si];
    std::vector<double> fit_x_loglog, fit_y_loglog, fit_x_semilog, fit_y_semilog;
    for (std::size_t ni = 0; ni < ns.size(); ++ni) {
      std::vector<double> vals;
      for (int t = 0; t < trials; ++t) {
        const auto idx = (ni * scheds.size() + si) * static_cast<std::size_t>(trials) +
                         static_cast<std::size_t>(t);
        const auto& r = out.records[idx];
        if (r.ok)
          vals.push_back(r.kl_min);
        else
          ++sum.failures;
      }
      if (vals.empty()) continue;
      const int n = ns[ni];
      const int m = schedule_m(scheds[si], n, cfg.log_base);
      sum.n_values.push_back(n);
      sum.mean_kl.push_back(mean(vals));
      sum.stderr_kl.push_back(standard_error(vals));
      if (sum.mean_kl.back() > 0.0) {
        fit_x_loglog.push_back(std::log(static_cast<double>(n)));
        fit_y_loglog.push_back(std::log(sum.mean_kl.back()));
      }
      fit_x_semilog.push_back(std::log(static_cast<double>(n) / m));
      fit_y_semilog.push_back(sum.mean_kl.back());
    }
    auto spread = [](std::span<const double> v) {
      if (v.size() < 2) return 0.0;
      return *std::max_element(v.begin(), v.end()) -
             *std::min_element(v.begin(), v.end());
    };
    if (spread(fit_x_loglog) > 1e-12) sum.loglog_fit = linear_fit(fit_x_loglog, fit_y_loglog);
    if (spread(fit_x_semilog) > 1e-12)
      sum.semilog_fit = linear_fit(fit_x_semilog, fit_y_semilog);

    // theory overlays: c * N/M for the basic method, c * ln(N/M) when scaled
    std::vector<double> tvals;
    for (std::size_t k = 0; k < sum.n_values.size(); ++k) {
      const double nm = static_cast<double>(sum.n_values[k]) /
                        schedule_m(sum.schedule, sum.n_values[k], cfg.log_base);
      tvals.push_back(scaled ? std::log(nm) : nm);
    }
    sum.theory_constant = fit_scale_constant(tvals, sum.mean_kl);
    out.summaries.push_back(std::move(sum));
  }

  // outputs
  std::filesystem::create_directories(cfg.output_dir);
  detail::write_meta(cfg, cfg.output_dir);
  {
    std::vector<std::string> lines{kRecordHeader};
    for (const auto& r : out.records) lines.push_back(detail::record_row(r));
    out.records_path = cfg.output_dir + "/records.csv";
    detail::write_lines(out.records_path, lines);
  }
  {
    std::ostringstream os;
    os << "{\n  \"schedules\": [\n";
    for (std::size_t i = 0; i < out.summaries.size(); ++i) {
      const auto& s = out.summaries[i];
      os << "    {\"schedule\": \"" << to_string(s.schedule) << "\", \"loglog_slope\": "
         << detail::fmt(s.loglog_fit.slope) << ", \"semilog_slope\": "
         << detail::fmt(s.semilog_fit.slope) << ", \"semilog_r2\": "
         << detail::fmt(s.semilog_fit.r_squared) << ", \"theory_constant\": "
         << detail::fmt(s.theory_constant) << ", \"failures\": " << s.failures << "}"
         << (i + 1 < out.summaries.size() ? ",\n" : "\n");
    }
    os << "  ]\n}";
    out.summary_path = cfg.output_dir + "/summary.json";
    std::ofstream f(out.summary_path, std::ios::binary);
    f << os.str() << "\n";
  }
  {
    std::vector<PlotSeries> series;
    const auto colors = detail::schedule_colors();
    for (std::size_t i = 0; i < out.summaries.size(); ++i) {
      const auto& s = out.summaries[i];
      PlotSeries ps;
      ps.label = to_string(s.schedule);
      ps.color = colors[i % colors.size()];
      for (std::size_t k = 0; k < s.n_values.size(); ++k) {
        ps.x.push_back(s.n_values[k]);
        ps.y.push_back(s.mean_kl[k]);
        ps.yerr.push_back(s.stderr_kl[k]);
      }
      series.push_back(ps);
      PlotSeries th;
      th.label = to_string(s.schedule) + " theory";
      th.color = ps.color;
      th.dashed = true;
      for (std::size_t k = 0; k < s.n_values.size(); ++k) {
        const double nm = static_cast<double>(s.n_values[k]) /
                          schedule_m(s.schedule, s.n_values[k], cfg.log_base);
        th.x.push_back(s.n_values[k]);
        th.y.push_back(s.theory_constant * (scaled ? std::log(nm) : nm));
      }
      series.push_back(th);
    }
    PlotOptions po;
    po.title = (scaled ? "Scaled importance-weighted coresets, " : "Importance-weighted coresets, ") +
               to_string(cfg.model);
    po.xlabel = "N";
    po.ylabel = "min KL";
    po.log_x = true;
    po.log_y = !scaled;
    out.plot_path = cfg.output_dir + "/plot.svg";
    write_svg_plot(out.plot_path, series, po);
  }
  return out;
}

// Fig. 3: subsample-optimize coresets of size round(5 + 2 log N) with uniform
// probabilities; records the max of forward/reverse KL.
inline ExperimentResult run_fig3(const ExperimentConfig& cfg) {
  if (cfg.experiment != ExperimentKind::fig3)
    throw ConfigError("run_fig3 requires experiment fig3");
  cfg.validate();
  const int trials = cfg.resolved_trials();
  const auto& ns = cfg.n_grid;
  const int total = static_cast<int>(ns.size()) * trials;
  std::vector<ExperimentRecord> records(static_cast<std::size_t>(total));

  parallel_for_indexed(total, cfg.resolved_threads(), [&](int task) {
    const int t = task % trials;
    const int ni = task / trials;
    const int n = ns[static_cast<std::size_t>(ni)];
    const int m = schedule_m(MSchedule::five_plus_two_log_n, n, cfg.log_base);

    ExperimentRecord rec;
    rec.model = cfg.model;
    rec.algorithm = "subsample_optimize";
    rec.n = n;
    rec.m = m;
    rec.trial = t;
    const auto start = std::chrono::steady_clock::now();
    try {
      auto model = detail::make_model(cfg.model, n, detail::data_rng(cfg.seed, cfg.model, n, t));
      const auto probs = importance_probabilities(*model, ProbabilityMode::uniform);
      Rng rng = detail::algo_rng(cfg.seed, cfg.model, n, t, 7);
      const auto so = subsample_optimize(*model, probs, m, cfg.sample_count, rng);
      rec.nnls_objective = so.objective;
      const KlPair kp = kl_pair(*model, so.weights);
      rec.kl_forward = kp.forward;
      rec.kl_reverse = kp.reverse;
      rec.kl_min = kp.min();
      rec.kl_max = kp.max();
      rec.ok = std::isfinite(kp.forward) && std::isfinite(kp.reverse) &&
               kp.forward >= 0.0 && kp.reverse >= 0.0;
    } catch (const std::exception& e) {
      rec.ok = false;
      rec.error = e.what();
    }
    rec.runtime_ms = detail::elapsed_ms(start);
    records[static_cast<std::size_t>(task)] = rec;
  });

  ExperimentResult out;
  out.config = cfg;
  out.records = std::move(records);

  ScheduleSummary sum;
  sum.schedule = MSchedule::five_plus_two_log_n;
  std::vector<double> fit_x, fit_y;
  for (std::size_t ni = 0; ni < ns.size(); ++ni) {
    std::vector<double> vals;
    for (int t = 0; t < trials; ++t) {
      const auto& r = out.records[ni * static_cast<std::size_t>(trials) +
                                  static_cast<std::size_t>(t)];
      if (r.ok)
        vals.push_back(r.kl_max);
      else
        ++sum.failures;
    }
    if (vals.empty()) continue;
    sum.n_values.push_back(ns[ni]);
    sum.mean_kl.push_back(mean(vals));
    sum.stderr_kl.push_back(standard_error(vals));
    fit_x.push_back(std::log(static_cast<double>(ns[ni])));
    fit_y.push_back(sum.mean_kl.back());
  }
  if (fit_x.size() >= 2) sum.semilog_fit = linear_fit(fit_x, fit_y);
  out.summaries.push_back(std::move(sum));

  std::filesystem::create_directories(cfg.output_dir);
  detail::write_meta(cfg, cfg.output_dir);
  {
    std::vector<std::string> lines{kRecordHeader};
    for (const auto& r : out.records) lines.push_back(detail::record_row(r));
    out.records_path = cfg.output_dir + "/records.csv";
    detail::write_lines(out.records_path, lines);
  }
  {
    const auto& s = out.summaries.front();
    std::ostringstream os;
    os << "{\n  \"slope_vs_ln_n\": " << detail::fmt(s.semilog_fit.slope)
       << ",\n  \"failures\": " << s.failures << ",\n  \"means\": [";
    for (std::size_t k = 0; k < s.mean_kl.size(); ++k)
      os << (k ? "," : "") << detail::fmt(s.mean_kl[k]);
    os << "],\n  \"stderrs\": [";
    for (std::size_t k = 0; k < s.stderr_kl.size(); ++k)
      os << (k ? "," : "") << detail::fmt(s.stderr_kl[k]);
    os << "]\n}";
    out.summary_path = cfg.output_dir + "/summary.json";
    std::ofstream f(out.summary_path, std::ios::binary);
    f << os.str() << "\n";
  }
  {
    const auto& s = out.summaries.front();
    PlotSeries ps;
    ps.label = "5 + 2 log N";
    ps.color = "#000000";
    for (std::size_t k = 0; k < s.n_values.size(); ++k) {
      ps.x.push_back(s.n_values[k]);
      ps.y.push_back(s.mean_kl[k]);
      ps.yerr.push_back(s.stderr_kl[k]);
    }
    PlotOptions po;
    po.title = "Subsample-optimize coresets, " + to_string(cfg.model);
    po.xlabel = "N";
    po.ylabel = "max KL";
    po.log_x = true;
    out.plot_path = cfg.output_dir + "/plot.svg";
    write_svg_plot(out.plot_path, std::vector<PlotSeries>{ps}, po);
  }
  return out;
}

struct BoundsRow {
  ModelKind model = ModelKind::cauchy;
  int config_id = 0;
  std::string kind;  // "sandwich" or "thm3"
  int m = 0;
  int trial = 0;
  BoundReport report;
  bool violation = false;
  std::string detail;
  long runtime_ms = 0;
};

struct BoundsSuiteResult {
  ExperimentConfig config;
  std::vector<BoundsRow> rows;
  int violations = 0;
  std::string csv_path;
};

// The sandwich suite. Lower bounds, upper bounds, KL values, covariance, and
// subexponentiality certificates for one configuration are all evaluated
// against the same grid measure, so the checked inequalities are exact
// mathematical facts about the discrete distributions; a violation means an
// implementation bug, not quadrature error. The relative tolerance absorbs
// float roundoff only.
inline BoundsSuiteResult run_bounds_suite(const ExperimentConfig& cfg) {
  if (cfg.experiment != ExperimentKind::bounds_suite)
    throw ConfigError("run_bounds_suite requires experiment bounds_suite");
  cfg.validate();
  constexpr double kTol = 1e-6;
  constexpr int kSandwichN = 500;
  constexpr int kThm3N = 128;
  const int sandwich_rows = cfg.bounds_configs;
  const int thm3_rows = 12;
  const int total = sandwich_rows + thm3_rows;
  const std::array<int, 3> m_choices{10, 50, 500};

  BoundsSuiteResult out;
  out.config = cfg;
  out.rows.resize(static_cast<std::size_t>(total));

  parallel_for_indexed(total, cfg.resolved_threads(), [&](int task) {
    BoundsRow row;
    row.config_id = task;
    const auto start = std::chrono::steady_clock::now();
    if (task < sandwich_rows) {
      row.kind = "sandwich";
      row.model = (task % 2 == 0) ? ModelKind::cauchy : ModelKind::logreg;
      row.m = m_choices[static_cast<std::size_t>((task / 2) % 3)];
      row.trial = task / 6;
      auto model = detail::make_model(row.model, kSandwichN,
                                      detail::data_rng(cfg.seed, row.model, kSandwichN, row.trial));
      const auto probs =
          importance_probabilities(*model, ProbabilityMode::x_squared_thresholded);
      Rng rng = detail::algo_rng(cfg.seed, row.model, kSandwichN, row.trial, 100 + task);
      const CoresetWeights w = importance_weighted(probs, row.m, rng);

      KlPairOptions qopts;
      qopts.rep = Rep::native;
      const BoundsWorkspace ws = make_bounds_workspace(*model, w, qopts);
      row.report.kl_forward = ws.kl_forward;
      row.report.kl_reverse = ws.kl_reverse;

      // balls around the grid MAP at three dyadic radii in posterior sd units
      const int dims = ws.grid.dims;
      std::int64_t map_node = 0;
      double best = -kInf;
      for (std::size_t i = 0; i < ws.base.size(); ++i) {
        const double v = ws.pi.log_masses[i];
        if (v > best) {
          best = v;
          map_node = static_cast<std::int64_t>(i);
        }
      }
      const ThetaPoint map_pt = ws.grid.node_point(map_node);
      double var_sum = 0.0;
      for (int a = 0; a < dims; ++a) {
        const double ma = expectation(ws.pi, [&](const ThetaPoint& p) {
          return p[static_cast<std::size_t>(a)];
        });
        var_sum += expectation(ws.pi, [&](const ThetaPoint& p) {
          const double d = p[static_cast<std::size_t>(a)] - ma;
          return d * d;
        });
      }
      const double sd = std::sqrt(std::max(var_sum / dims, 1e-300));
      Ball ball;
      ball.center = map_pt;
      ball.h = Eigen::Matrix2d::Identity() / (sd * sd);
      double lower = 0.0;
      for (double scale : {1.0, 2.0, 4.0}) {
        ball.r = scale;
        lower = std::max(lower, f_lower(j_b(ws, ball)));
      }
      if (cfg.self_test_negate_lower) lower = -lower;
      row.report.lower = lower;
      const auto ub = kl_upper_bound(ws);
      row.report.upper_lambda = ub.value;
      row.report.argmin_lambda = ub.argmin_lambda;

      const double kl_min = row.report.kl_min(), kl_max = row.report.kl_max();
      const bool lower_ok = row.report.lower >= -kTol &&
                            row.report.lower <= kl_min + kTol * std::max(1.0, kl_min);
      const bool upper_ok =
          !(std::isfinite(ub.value)) || kl_max <= ub.value + kTol * std::max(1.0, kl_max);
      row.violation = !(lower_ok && upper_ok);
      if (row.violation)
        row.detail = "lower=" + detail::fmt(row.report.lower) +
                     " min_kl=" + detail::fmt(kl_min) + " max_kl=" + detail::fmt(kl_max) +
                     " upper=" + detail::fmt(ub.value);
    } else {
      // full-covariance subexponential check on small perturbations of w = 1
      row.kind = "thm3";
      const int k = task - sandwich_rows;
      row.model = (k % 2 == 0) ? ModelKind::cauchy : ModelKind::logreg;
      row.trial = k / 2;
      row.m = kThm3N;
      auto model = detail::make_model(row.model, kThm3N,
                                      detail::data_rng(cfg.seed, row.model, kThm3N, row.trial));
      Rng rng = detail::algo_rng(cfg.seed, row.model, kThm3N, row.trial, 777);

      // provisional covariance on the full-posterior grid to size the step
      const CoresetWeights ones = CoresetWeights::ones(kThm3N);
      const Grid g0 = auto_grid(*model, Rep::pushforward, ones);
      const GridDistribution pi0 = build_posterior(*model, Rep::pushforward, ones, g0);
      std::vector<int> all(kThm3N);
      std::iota(all.begin(), all.end(), 0);
      const Eigen::MatrixXd a0 = covariance_of_potentials(pi0, *model, all);

      Eigen::VectorXd dir(kThm3N);
      for (int i = 0; i < kThm3N; ++i) dir[i] = 2.0 * rng.uniform() - 1.0;
      const double q0 = dir.dot(a0 * dir);
      const double target = 0.35;
      double eps = q0 > 0.0 ? std::sqrt(target / (4.0 * q0)) : 0.0;
      eps = std::min(eps, 0.999 / std::max(1e-12, dir.cwiseAbs().maxCoeff()));
      std::vector<CoresetWeights::Entry> entries;
      for (int i = 0; i < kThm3N; ++i) entries.emplace_back(i, 1.0 + eps * dir[i]);
      const CoresetWeights w(kThm3N, std::move(entries));

      const BoundsWorkspace ws = make_bounds_workspace(*model, w, {});
      row.report.kl_forward = ws.kl_forward;
      row.report.kl_reverse = ws.kl_reverse;
      const Eigen::MatrixXd a = covariance_of_potentials(ws.pi, *model, all);

      DirectionSpec w_dir;
      w_dir.indices = all;
      w_dir.coeffs.resize(static_cast<std::size_t>(kThm3N));
      const auto dense = w.dense();
      for (int i = 0; i < kThm3N; ++i)
        w_dir.coeffs[static_cast<std::size_t>(i)] =
            2.0 * (dense[static_cast<std::size_t>(i)] - 1.0);
      const BetaFit fit =
          fit_beta(*model, ws.pi, 100, rng, std::span<const DirectionSpec>(&w_dir, 1));
      row.report.beta_hat = fit.beta;
      row.report.upper_subexp = fit.certified ? subexp_kl_bound(w, a, fit.beta) : std::nullopt;
      const auto ub = kl_upper_bound(ws);
      row.report.upper_lambda = ub.value;
      row.report.argmin_lambda = ub.argmin_lambda;

      if (row.report.upper_subexp) {
        const double kl_max = row.report.kl_max();
        row.violation = kl_max > *row.report.upper_subexp + kTol * std::max(1.0, kl_max);
        if (row.violation)
          row.detail = "subexp=" + detail::fmt(*row.report.upper_subexp) +
                       " max_kl=" + detail::fmt(kl_max);
      } else {
        row.violation = false;
        row.detail = "bound absent";
      }
    }
    row.runtime_ms = detail::elapsed_ms(start);
    out.rows[static_cast<std::size_t>(task)] = row;
  });

  for (const auto& r : out.rows) out.violations += r.violation ? 1 : 0;

  std::filesystem::create_directories(cfg.output_dir);
  detail::write_meta(cfg, cfg.output_dir);
  std::vector<std::string> lines{
      "model,config_id,kind,M,trial,kl_forward,kl_reverse,lower,upper_lambda,"
      "argmin_lambda,upper_subexp,beta_hat,violation,detail,runtime_ms"};
  for (const auto& r : out.rows) {
    std::ostringstream os;
    os << to_string(r.model) << ',' << r.config_id << ',' << r.kind << ',' << r.m << ','
       << r.trial << ',' << detail::fmt(r.report.kl_forward) << ','
       << detail::fmt(r.report.kl_reverse) << ',' << detail::fmt(r.report.lower) << ','
       << detail::fmt(r.report.upper_lambda) << ',' << detail::fmt(r.report.argmin_lambda)
       << ',' << detail::opt_field(r.report.upper_subexp) << ','
       << detail::opt_field(r.report.beta_hat) << ',' << (r.violation ? 1 : 0) << ','
       << r.detail << ',' << r.runtime_ms;
    lines.push_back(os.str());
  }
  out.csv_path = cfg.output_dir + "/bounds.csv";
  detail::write_lines(out.csv_path, lines);
  return out;
}

struct DiagnosticsRow {
  ModelKind model;
  std::string algorithm;  // "importance" or "full"
  int n = 0, m = 0, trial = 0;
  double grad_stat = 0.0;     // ||g_w / s_w||
  double scaled_stat = 0.0;   // sqrt(M) * grad_stat (importance rows only)
  long runtime_ms = 0;
};

struct DiagnosticsResult {
  ExperimentConfig config;
  std::vector<DiagnosticsRow> rows;
  std::map<int, double> median_scaled_by_n;  // importance rows
  std::map<int, double> median_full_by_n;    // w = 1 rows
  std::string csv_path;
};

// Gradient diagnostic sweep: sqrt(M) ||g_w / s_w|| for importance-weighted
// coresets at fixed M, plus the w = 1 baseline which shrinks like N^{-1/2}.
inline DiagnosticsResult run_diagnostics(const ExperimentConfig& cfg, int fixed_m = 100) {
  if (cfg.experiment != ExperimentKind::diagnostics)
    throw ConfigError("run_diagnostics requires experiment diagnostics");
  cfg.validate();
  const int trials = cfg.resolved_trials();
  const auto& ns = cfg.n_grid;
  const int total = static_cast<int>(ns.size()) * trials;

  DiagnosticsResult out;
  out.config = cfg;
  out.rows.resize(static_cast<std::size_t>(total) * 2);

  parallel_for_indexed(total, cfg.resolved_threads(), [&](int task) {
    const int t = task % trials;
    const int ni = task / trials;
    const int n = ns[static_cast<std::size_t>(ni)];
    const auto start = std::chrono::steady_clock::now();
    auto model = detail::make_model(cfg.model, n, detail::data_rng(cfg.seed, cfg.model, n, t));
    const auto probs = importance_probabilities(*model, ProbabilityMode::uniform);
    Rng rng = detail::algo_rng(cfg.seed, cfg.model, n, t, 9);
    const CoresetWeights w = importance_weighted(probs, fixed_m, rng);

    DiagnosticsRow imp;
    imp.model = cfg.model;
    imp.algorithm = "importance";
    imp.n = n;
    imp.m = fixed_m;
    imp.trial = t;
    imp.grad_stat = grad_diagnostic(*model, w);
    imp.scaled_stat = std::sqrt(static_cast<double>(fixed_m)) * imp.grad_stat;
    imp.runtime_ms = detail::elapsed_ms(start);

    DiagnosticsRow full;
    full.model = cfg.model;
    full.algorithm = "full";
    full.n = n;
    full.m = n;
    full.trial = t;
    full.grad_stat = grad_diagnostic(*model, CoresetWeights::ones(n));
    full.scaled_stat = 0.0;
    full.runtime_ms = detail::elapsed_ms(start);

    out.rows[static_cast<std::size_t>(task) * 2] = imp;
    out.rows[static_cast<std::size_t>(task) * 2 + 1] = full;
  });

  for (std::size_t ni = 0; ni < ns.size(); ++ni) {
    std::vector<double> scaled, fulls;
    for (int t = 0; t < trials; ++t) {
      const auto base = (ni * static_cast<std::size_t>(trials) + static_cast<std::size_t>(t)) * 2;
      scaled.push_back(out.rows[base].scaled_stat);
      fulls.push_back(out.rows[base + 1].grad_stat);
    }
    out.median_scaled_by_n[ns[ni]] = median(scaled);
    out.median_full_by_n[ns[ni]] = median(fulls);
  }

  std::filesystem::create_directories(cfg.output_dir);
  detail::write_meta(cfg, cfg.output_dir);
  std::vector<std::string> lines{
      "model,algorithm,N,M,trial,grad_stat,sqrt_m_scaled,runtime_ms,status"};
  for (const auto& r : out.rows) {
    std::ostringstream os;
    os << to_string(r.model) << ',' << r.algorithm << ',' << r.n << ',' << r.m << ','
       << r.trial << ',' << detail::fmt(r.grad_stat) << ',' << detail::fmt(r.scaled_stat)
       << ',' << r.runtime_ms << ",ok";
    lines.push_back(os.str());
  }
  out.csv_path = cfg.output_dir + "/diagnostics.csv";
  detail::write_lines(out.csv_path, lines);
  return out;
}

}  // namespace coreset
