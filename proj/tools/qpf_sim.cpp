// qpf_sim: drive the quaternion particle filter over simulated scenarios.
//
//   qpf_sim run     --scenario s.json --filter f.json --seed 1 --out out/
//   qpf_sim mc      --runs 25 --scenario s.json --filter f.json --out out/
//   qpf_sim compare --runs 25 --scenario s.json --filter f.json --out out/

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "qpf/config_io.hpp"
#include "qpf/errors.hpp"
#include "qpf/simulation.hpp"

namespace {

struct CommonOptions {
  std::string scenario_path;
  std::string filter_path;
  std::uint64_t seed = 1;
  std::string out_dir = ".";
  std::optional<std::string> strategy;
  unsigned threads = 0;
  qpf::MetricsOptions metrics;
};

void AddCommon(CLI::App* cmd, CommonOptions& o, char const* seed_help) {
  cmd->add_option("--scenario", o.scenario_path, "Scenario JSON")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--filter", o.filter_path, "Filter config JSON")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, seed_help);
  cmd->add_option("--out", o.out_dir, "Output directory");
  cmd->add_option("--strategy", o.strategy,
                  "Override the filter's fiducial strategy")
      ->check(CLI::IsMember({"baseline", "mmse"}));
  cmd->add_option("--convergence-exclusion", o.metrics.convergence_exclusion,
                  "Seconds excluded from the 3-sigma consistency score");
  cmd->add_option("--final-window", o.metrics.final_window_fraction,
                  "Trailing fraction of the run used for the final RMSE");
}

void WriteText(std::filesystem::path const& path, std::string const& text) {
  std::ofstream out(path);
  if (!out) {
    throw qpf::ConfigError("cannot write " + path.string());
  }
  out << text << '\n';
}

struct Loaded {
  qpf::Scenario scenario;
  qpf::FilterConfig filter;
};

Loaded Load(CommonOptions const& o) {
  Loaded l{qpf::LoadScenario(o.scenario_path),
           qpf::LoadFilterConfig(o.filter_path)};
  if (o.strategy) {
    l.filter.fiducial = qpf::ParseFiducialStrategy(*o.strategy);
  }
  std::filesystem::create_directories(o.out_dir);
  // Keep the exact inputs next to the outputs.
  WriteText(std::filesystem::path(o.out_dir) / "scenario.json",
            qpf::ScenarioToJson(l.scenario));
  WriteText(std::filesystem::path(o.out_dir) / "filter.json",
            qpf::FilterConfigToJson(l.filter));
  return l;
}

void PrintIssues(qpf::RunMetrics const& m) {
  for (auto const& rec : m.issues) {
    std::cerr << "seed " << m.seed << " step " << rec.step << ": "
              << qpf::ToString(rec.issue) << ": " << rec.message << '\n';
  }
}

int Run(CommonOptions const& o) {
  Loaded const l = Load(o);
  qpf::RunMetrics const m = qpf::RunOnce(l.scenario, l.filter, o.seed);
  PrintIssues(m);
  std::filesystem::path const csv =
      std::filesystem::path(o.out_dir) / ("run_" + std::to_string(o.seed) + ".csv");
  std::ofstream out(csv);
  qpf::WriteRunCsv(m, out);
  qpf::MonteCarloSummary const s = qpf::Summarize({m}, o.metrics);
  WriteText(std::filesystem::path(o.out_dir) / "summary.json",
            qpf::SummaryToJson(s, o.metrics));
  std::cout << "strategy=" << qpf::ToString(l.filter.fiducial)
            << " final_rmse_rad=" << s.median_final_rmse_rad
            << " sigma3_consistency=" << s.sigma3_consistency
            << " resamples=" << m.resample_count
            << " wall_time_s=" << m.wall_time_s << '\n'
            << "wrote " << csv.string() << '\n';
  return 0;
}

int MonteCarlo(CommonOptions const& o, int runs, bool write_csv) {
  Loaded const l = Load(o);
  std::vector<qpf::RunMetrics> metrics;
  qpf::MonteCarloSummary const s = qpf::RunMonteCarlo(
      l.scenario, l.filter, runs, o.seed, o.metrics, o.threads, &metrics);
  for (qpf::RunMetrics const& m : metrics) {
    PrintIssues(m);
    if (write_csv) {
      std::ofstream out(std::filesystem::path(o.out_dir) /
                        ("run_" + std::to_string(m.seed) + ".csv"));
      qpf::WriteRunCsv(m, out);
    }
  }
  std::string const json = qpf::SummaryToJson(s, o.metrics);
  WriteText(std::filesystem::path(o.out_dir) / "summary.json", json);
  std::cout << json << '\n';
  return 0;
}

int Compare(CommonOptions const& o, int runs) {
  Loaded const l = Load(o);
  qpf::ComparisonReport const report =
      qpf::CompareFiducials(l.scenario, l.filter, runs, o.seed, o.metrics,
                            qpf::FiducialStrategy::kBaseline,
                            qpf::FiducialStrategy::kMmseAverage, o.threads);
  std::ofstream csv(std::filesystem::path(o.out_dir) / "comparison.csv");
  qpf::WriteComparisonCsv(report, csv);
  std::string const json = qpf::ComparisonToJson(report, o.metrics);
  WriteText(std::filesystem::path(o.out_dir) / "comparison.json", json);
  std::cout << "baseline median_final_rmse_rad="
            << report.first.median_final_rmse_rad
            << " divergences=" << report.first.divergence_count << '\n'
            << "mmse     median_final_rmse_rad="
            << report.second.median_final_rmse_rad
            << " divergences=" << report.second.divergence_count << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quaternion particle filter simulation"};
  app.require_subcommand(1);

  CommonOptions run_opts;
  CLI::App* run = app.add_subcommand("run", "Single simulated run");
  AddCommon(run, run_opts, "Run seed");

  CommonOptions mc_opts;
  int mc_runs = 25;
  bool mc_csv = false;
  CLI::App* mc = app.add_subcommand("mc", "Monte Carlo batch");
  AddCommon(mc, mc_opts, "First seed of the batch");
  mc->add_option("--runs", mc_runs, "Number of runs")->required();
  mc->add_option("--threads", mc_opts.threads, "Worker threads (0 = all)");
  mc->add_flag("--csv", mc_csv, "Also write one CSV per run");

  CommonOptions cmp_opts;
  int cmp_runs = 25;
  CLI::App* cmp = app.add_subcommand(
      "compare", "Paired baseline vs MMSE fiducial on common random numbers");
  AddCommon(cmp, cmp_opts, "First seed of the batch");
  cmp->add_option("--runs", cmp_runs, "Number of paired runs")->required();
  cmp->add_option("--threads", cmp_opts.threads, "Worker threads (0 = all)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      return Run(run_opts);
    }
    if (*mc) {
      return MonteCarlo(mc_opts, mc_runs, mc_csv);
    }
    if (*cmp) {
      return Compare(cmp_opts, cmp_runs);
    }
  } catch (qpf::Error const& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
