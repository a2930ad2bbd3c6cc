#pragma once

// Scenario generation, single runs, Monte Carlo batches and the paired
// baseline-versus-MMSE fiducial comparison.

#include <cstdint>
#include <string>
#include <vector>

#include "qpf/dynamics.hpp"
#include "qpf/particle_filter.hpp"

namespace qpf {

struct Scenario {
  double duration = 3600.0;  // s
  double dt = 1.0;           // s
  RateProfile rate_profile;
  GyroParams gyro;
  std::vector<Vec3> references;  // inertial unit vectors
  double obs_sigma = 1e-3;       // rad
  double obs_interval = 1.0;     // s, multiple of dt
  double init_attitude_error = 0.0;  // rad, per-axis 1σ
  double init_bias_error = 0.0;      // rad/s, per-axis 1σ

  // Throws ConfigError.
  void Validate() const;
  int steps() const;
  int obs_every() const;
};

// How runs are scored. Not part of the scenario so that one trajectory can
// be scored several ways.
struct MetricsOptions {
  double convergence_exclusion = 300.0;  // s excluded from 3σ consistency
  double final_window_fraction = 0.1;    // trailing share used for final RMSE
  double divergence_threshold = 0.17453292519943295;  // rad (10°)
};

struct StepIssueRecord {
  int step = 0;
  StepIssue issue = StepIssue::kDegenerateAverage;
  std::string message;
};

struct RunMetrics {
  std::uint64_t seed = 0;
  FiducialStrategy strategy = FiducialStrategy::kMmseAverage;
  std::vector<double> t;
  std::vector<double> err_att;   // rad, geodesic
  std::vector<Vec3> err_bias;    // rad/s, estimate − truth
  std::vector<double> sig3_att;  // rad
  std::vector<double> ess;
  std::vector<double> norm_dev;  // max |‖q‖ − 1| over q_hat and particles
  std::vector<StepIssueRecord> issues;
  int resample_count = 0;
  // FNV-1a over the truth, gyro and observation streams.
  std::uint64_t stream_hash = 0;
  double wall_time_s = 0.0;

  double FinalRmse(MetricsOptions const& options) const;
  // Steps past the exclusion window with err_att ≤ sig3_att, and their total.
  std::pair<std::size_t, std::size_t> Sigma3Counts(
      MetricsOptions const& options) const;
  bool Diverged(MetricsOptions const& options) const;
};

// Simulates truth and sensors for `seed`, drives the filter over the whole
// scenario and records per-step metrics. Truth and measurements depend only
// on (scenario, seed); the filter draws from its own stream.
RunMetrics RunOnce(Scenario const& scenario, FilterConfig const& config,
                   std::uint64_t seed);

struct MonteCarloSummary {
  FiducialStrategy strategy = FiducialStrategy::kMmseAverage;
  int n_runs = 0;
  double median_final_rmse_rad = 0.0;
  double mean_final_rmse_rad = 0.0;
  double sigma3_consistency = 0.0;
  int divergence_count = 0;
  double wall_time_s = 0.0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> final_rmse;  // per run, seed order
  std::vector<bool> diverged;
  std::vector<std::uint64_t> stream_hashes;
};

// Reduces runs in seed order, independent of how they were produced.
MonteCarloSummary Summarize(std::vector<RunMetrics> runs,
                            MetricsOptions const& options);

// Seeds base_seed .. base_seed + n_runs − 1, spread over `threads` workers
// (0 = hardware concurrency). Per-run metrics are returned through `runs`
// when non-null.
MonteCarloSummary RunMonteCarlo(Scenario const& scenario,
                                FilterConfig const& config, int n_runs,
                                std::uint64_t base_seed,
                                MetricsOptions const& options,
                                unsigned threads = 0,
                                std::vector<RunMetrics>* runs = nullptr);

struct ComparisonRow {
  std::uint64_t seed = 0;
  double first_final_rmse = 0.0;
  double second_final_rmse = 0.0;
  bool first_diverged = false;
  bool second_diverged = false;
  bool same_streams = false;
};

struct ComparisonReport {
  MonteCarloSummary first;
  MonteCarloSummary second;
  std::vector<ComparisonRow> rows;
};

// Runs both strategies on identical seeds (common random numbers).
ComparisonReport CompareFiducials(
    Scenario const& scenario, FilterConfig const& config_template, int n_runs,
    std::uint64_t base_seed, MetricsOptions const& options,
    FiducialStrategy first = FiducialStrategy::kBaseline,
    FiducialStrategy second = FiducialStrategy::kMmseAverage,
    unsigned threads = 0);

double Median(std::vector<double> values);

}  // namespace qpf
