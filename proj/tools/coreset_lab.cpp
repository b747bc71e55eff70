#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <string>

#include "coreset/experiments.hpp"

namespace {

using coreset::ConfigError;
using coreset::ExperimentConfig;
using coreset::ExperimentKind;
using coreset::ModelKind;
using coreset::MSchedule;

ModelKind parse_model(const std::string& s) {
  if (s == "cauchy") return ModelKind::cauchy;
  if (s == "logreg") return ModelKind::logreg;
  throw ConfigError("unknown model: " + s);
}

MSchedule parse_schedule(const std::string& s) {
  if (s == "log_n") return MSchedule::log_n;
  if (s == "sqrt_n") return MSchedule::sqrt_n;
  if (s == "half_n") return MSchedule::half_n;
  if (s == "five_plus_two_log_n") return MSchedule::five_plus_two_log_n;
  throw ConfigError("unknown m-schedule: " + s);
}

// config file mirrors the flags; explicitly passed flags win
void apply_config_file(const std::string& path, ExperimentConfig& cfg) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad config file: ") + e.what());
  }
  if (j.contains("model")) cfg.model = parse_model(j["model"].get<std::string>());
  if (j.contains("n_grid")) cfg.n_grid = j["n_grid"].get<std::vector<int>>();
  if (j.contains("trials")) cfg.trials = j["trials"].get<int>();
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("samples")) cfg.sample_count = j["samples"].get<int>();
  if (j.contains("out")) cfg.output_dir = j["out"].get<std::string>();
  if (j.contains("full")) cfg.full = j["full"].get<bool>();
  if (j.contains("threads")) cfg.threads = j["threads"].get<int>();
  if (j.contains("log_base")) cfg.log_base = j["log_base"].get<double>();
  if (j.contains("m_schedule")) {
    const auto s = j["m_schedule"].get<std::string>();
    if (s != "all") cfg.schedules = {parse_schedule(s)};
  }
}

int run(const ExperimentConfig& cfg) {
  using namespace coreset;
  switch (cfg.experiment) {
    case ExperimentKind::fig2:
    case ExperimentKind::fig2_scaled: {
      const auto res = run_fig2(cfg);
      for (const auto& s : res.summaries)
        std::printf("%s %s: loglog slope %.4f, semilog slope %.4f (R2 %.3f), failures %d\n",
                    to_string(cfg.experiment).c_str(), to_string(s.schedule).c_str(),
                    s.loglog_fit.slope, s.semilog_fit.slope, s.semilog_fit.r_squared,
                    s.failures);
      std::printf("records: %s\n", res.records_path.c_str());
      return 0;
    }
    case ExperimentKind::fig3: {
      const auto res = run_fig3(cfg);
      const auto& s = res.summaries.front();
      std::printf("fig3 slope of mean max-KL vs ln N: %.4f, failures %d\n",
                  s.semilog_fit.slope, s.failures);
      std::printf("records: %s\n", res.records_path.c_str());
      return 0;
    }
    case ExperimentKind::bounds_suite: {
      const auto res = run_bounds_suite(cfg);
      std::printf("bounds suite: %zu rows, %d violations\n", res.rows.size(),
                  res.violations);
      if (res.violations > 0) {
        for (const auto& r : res.rows)
          if (r.violation)
            std::printf("  violation config_id=%d model=%s kind=%s M=%d trial=%d %s\n",
                        r.config_id, to_string(r.model).c_str(), r.kind.c_str(), r.m,
                        r.trial, r.detail.c_str());
        return 2;
      }
      return 0;
    }
    case ExperimentKind::diagnostics: {
      const auto res = run_diagnostics(cfg);
      for (const auto& [n, med] : res.median_scaled_by_n)
        std::printf("diagnostics N=%d median sqrt(M)*||g_w/s_w|| = %.6f\n", n, med);
      return 0;
    }
  }
  return 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian coreset construction and KL diagnostics"};
  app.require_subcommand(1);

  std::string model = "cauchy", out = "out", m_schedule = "all", config_path;
  std::vector<int> n_grid;
  int trials = 0, samples = 1000, threads = 0;
  std::uint64_t seed = 20240817;
  bool full = false, self_test = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--model", model, "cauchy or logreg");
    sub->add_option("--n-grid", n_grid, "dataset sizes (strictly increasing)")
        ->delimiter(',');
    sub->add_option("--trials", trials, "trials per configuration");
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--samples", samples, "posterior sample count S");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--threads", threads, "worker threads (default: hardware)");
    sub->add_option("--config", config_path, "JSON config file; flags override");
    sub->add_flag("--full", full, "full-size trial counts");
    sub->add_option("--m-schedule", m_schedule,
                    "log_n|sqrt_n|half_n|five_plus_two_log_n|all");
  };

  auto* fig2 = app.add_subcommand("fig2", "importance-weighted coreset sweep");
  auto* fig2s = app.add_subcommand("fig2_scaled", "with optimal post-hoc scaling");
  auto* fig3 = app.add_subcommand("fig3", "subsample-optimize coreset sweep");
  auto* bounds = app.add_subcommand("bounds_suite", "bound sandwich checks");
  auto* diag = app.add_subcommand("diagnostics", "gradient norm diagnostics");
  for (auto* sub : {fig2, fig2s, fig3, bounds, diag}) add_common(sub);
  bounds->add_flag("--self-test-negate-lower", self_test,
                   "corrupt the lower bound to prove the checker detects violations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 3;
  }

  coreset::ExperimentConfig cfg;
  try {
    if (fig2->parsed()) cfg.experiment = ExperimentKind::fig2;
    if (fig2s->parsed()) cfg.experiment = ExperimentKind::fig2_scaled;
    if (fig3->parsed()) cfg.experiment = ExperimentKind::fig3;
    if (bounds->parsed()) cfg.experiment = ExperimentKind::bounds_suite;
    if (diag->parsed()) cfg.experiment = ExperimentKind::diagnostics;

    if (!config_path.empty()) apply_config_file(config_path, cfg);

    CLI::App* sub = app.get_subcommands().front();
    if (!sub->get_option("--model")->empty() || config_path.empty())
      cfg.model = parse_model(model);
    if (!n_grid.empty()) cfg.n_grid = n_grid;
    if (!sub->get_option("--trials")->empty()) cfg.trials = trials;
    if (!sub->get_option("--seed")->empty() || config_path.empty()) cfg.seed = seed;
    if (!sub->get_option("--samples")->empty() || config_path.empty())
      cfg.sample_count = samples;
    if (!sub->get_option("--out")->empty() || config_path.empty()) cfg.output_dir = out;
    if (!sub->get_option("--threads")->empty()) cfg.threads = threads;
    if (sub->get_option("--full")->count() > 0) cfg.full = full;
    if (!sub->get_option("--m-schedule")->empty() && m_schedule != "all")
      cfg.schedules = {parse_schedule(m_schedule)};
    cfg.self_test_negate_lower = self_test;

    cfg.validate();
    return run(cfg);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
