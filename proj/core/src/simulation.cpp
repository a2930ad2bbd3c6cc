#include "qpf/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <numeric>
#include <thread>

#include "qpf/errors.hpp"
#include "qpf/random.hpp"

namespace qpf {

namespace {

constexpr std::uint64_t kTruthStream = 1;
constexpr std::uint64_t kFilterStream = 2;

class StreamHasher {
 public:
  void Add(double x) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &x, sizeof(double));
    for (unsigned char b : bytes) {
      hash_ ^= b;
      hash_ *= 0x100000001b3ULL;
    }
  }
  void Add(Vec3 const& v) {
    for (int i = 0; i < 3; ++i) {
      Add(v[i]);
    }
  }
  void Add(Vec4 const& v) {
    for (int i = 0; i < 4; ++i) {
      Add(v[i]);
    }
  }
  std::uint64_t value() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

UnitQuaternion RandomAttitude(Rng& rng) {
  Vec4 v;
  do {
    v << StandardNormal3(rng), StandardNormal(rng);
  } while (v.norm() < 1e-6);
  return UnitQuaternion(v / v.norm());
}

}  // namespace

void Scenario::Validate() const {
  if (!(dt > 0.0)) {
    throw ConfigError("scenario dt must be positive");
  }
  if (!(duration >= dt)) {
    throw ConfigError("scenario duration must cover at least one step");
  }
  double const ratio = obs_interval / dt;
  if (!(obs_interval > 0.0) || std::abs(ratio - std::round(ratio)) > 1e-9) {
    throw ConfigError("obs_interval must be a positive multiple of dt");
  }
  if (std::abs(gyro.dt - dt) > 1e-12) {
    throw ConfigError("gyro.dt must equal the scenario dt");
  }
  try {
    gyro.Validate();
  } catch (InvalidArgument const& e) {
    throw ConfigError(e.what());
  }
  if (!(obs_sigma > 0.0)) {
    throw ConfigError("obs_sigma must be positive");
  }
  if (!(init_attitude_error >= 0.0) || !(init_bias_error >= 0.0)) {
    throw ConfigError("initial error standard deviations must be nonnegative");
  }
  for (Vec3 const& r : references) {
    if (std::abs(r.norm() - 1.0) > 1e-12) {
      throw ConfigError("reference vectors must be unit to 1e-12");
    }
  }
  bool independent = false;
  for (std::size_t i = 0; i < references.size() && !independent; ++i) {
    for (std::size_t j = i + 1; j < references.size(); ++j) {
      if (references[i].cross(references[j]).norm() > 1e-6) {
        independent = true;
        break;
      }
    }
  }
  if (!independent) {
    throw ConfigError("need at least two non-collinear reference vectors");
  }
}

int Scenario::steps() const {
  return static_cast<int>(std::llround(duration / dt));
}

int Scenario::obs_every() const {
  return static_cast<int>(std::llround(obs_interval / dt));
}

double RunMetrics::FinalRmse(MetricsOptions const& options) const {
  if (t.empty()) {
    return 0.0;
  }
  double const start = t.back() * (1.0 - options.final_window_fraction);
  double sum_sq = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] > start) {
      sum_sq += err_att[i] * err_att[i];
      ++count;
    }
  }
  return count == 0 ? err_att.back() : std::sqrt(sum_sq / count);
}

std::pair<std::size_t, std::size_t> RunMetrics::Sigma3Counts(
    MetricsOptions const& options) const {
  std::size_t inside = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] <= options.convergence_exclusion) {
      continue;
    }
    ++total;
    if (err_att[i] <= sig3_att[i]) {
      ++inside;
    }
  }
  return {inside, total};
}

bool RunMetrics::Diverged(MetricsOptions const& options) const {
  return !err_att.empty() && !(err_att.back() <= options.divergence_threshold);
}

RunMetrics RunOnce(Scenario const& scenario, FilterConfig const& config,
                   std::uint64_t seed) {
  scenario.Validate();
  config.Validate();
  auto const started = std::chrono::steady_clock::now();

  Rng truth_rng = MakeRng(seed, kTruthStream);
  TruthState truth;
  truth.q_true = RandomAttitude(truth_rng);
  truth.beta_true = scenario.init_bias_error * StandardNormal3(truth_rng);
  truth.omega_true = scenario.rate_profile.At(0.0);
  truth.t = 0.0;

  // Initial attitude error is drawn from the same local prior the filter
  // is initialized with.
  double const att_sigma =
      scenario.init_attitude_error / config.grp.small_angle_scale();
  Mat6 cov0 = Mat6::Zero();
  cov0.topLeftCorner<3, 3>() = att_sigma * att_sigma * Mat3::Identity();
  cov0.bottomRightCorner<3, 3>() =
      scenario.init_bias_error * scenario.init_bias_error * Mat3::Identity();
  Mrp const initial_error{att_sigma * StandardNormal3(truth_rng)};
  UnitQuaternion const q0 =
      ComposeGlobal(ErrorFromMrp(initial_error, config.grp), truth.q_true);

  FilterConfig run_config = config;
  run_config.seed = MakeRng(seed ^ (config.seed * 0x9e3779b97f4a7c15ULL),
                            kFilterStream)();
  QuaternionParticleFilter filter(run_config, q0, Vec3::Zero(), cov0);

  int const steps = scenario.steps();
  int const obs_every = scenario.obs_every();
  double const att_scale = config.grp.small_angle_scale();

  RunMetrics m;
  m.seed = seed;
  m.strategy = config.fiducial;
  m.t.reserve(steps);
  m.err_att.reserve(steps);
  m.err_bias.reserve(steps);
  m.sig3_att.reserve(steps);
  m.ess.reserve(steps);
  m.norm_dev.reserve(steps);

  StreamHasher hasher;
  std::vector<VectorObservation> obs;
  for (int k = 0; k < steps; ++k) {
    GyroMeasurement const gyro = SampleGyro(truth, scenario.gyro, truth_rng);
    truth = PropagateTruth(truth, scenario.rate_profile, scenario.gyro,
                           truth_rng);
    obs.clear();
    if ((k + 1) % obs_every == 0) {
      obs = SampleObservations(truth.q_true, scenario.references,
                               scenario.obs_sigma, truth_rng);
    }
    hasher.Add(gyro.omega_meas);
    hasher.Add(truth.q_true.coeffs());
    for (VectorObservation const& o : obs) {
      hasher.Add(o.measured);
    }

    StepReport const report = filter.Step(gyro, obs);
    for (auto const& [issue, message] : report.issues) {
      m.issues.push_back(StepIssueRecord{k, issue, message});
    }
    if (report.resampled) {
      ++m.resample_count;
    }

    StateEstimate const& est = report.estimate;
    double norm_dev = std::abs(est.q_hat.coeffs().norm() - 1.0);
    for (Particle const& p : filter.particles().particles) {
      norm_dev = std::max(norm_dev, std::abs(p.q.coeffs().norm() - 1.0));
    }
    m.t.push_back(truth.t);
    m.err_att.push_back(AngleBetween(est.q_hat, truth.q_true));
    m.err_bias.push_back(est.beta_hat - truth.beta_true);
    m.sig3_att.push_back(3.0 * att_scale *
                         std::sqrt(est.cov.topLeftCorner<3, 3>().trace()));
    m.ess.push_back(est.ess);
    m.norm_dev.push_back(norm_dev);
  }
  m.stream_hash = hasher.value();
  m.wall_time_s = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - started)
                      .count();
  return m;
}

double Median(std::vector<double> values) {
  if (values.empty()) {
    return 0.0;
  }
  std::sort(values.begin(), values.end());
  std::size_t const mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid]
                                 : 0.5 * (values[mid - 1] + values[mid]);
}

MonteCarloSummary Summarize(std::vector<RunMetrics> runs,
                            MetricsOptions const& options) {
  std::sort(runs.begin(), runs.end(),
            [](RunMetrics const& a, RunMetrics const& b) {
              return a.seed < b.seed;
            });
  MonteCarloSummary s;
  s.n_runs = static_cast<int>(runs.size());
  if (!runs.empty()) {
    s.strategy = runs.front().strategy;
  }
  std::size_t inside = 0;
  std::size_t total = 0;
  for (RunMetrics const& run : runs) {
    s.seeds.push_back(run.seed);
    s.final_rmse.push_back(run.FinalRmse(options));
    s.stream_hashes.push_back(run.stream_hash);
    auto const [in, all] = run.Sigma3Counts(options);
    inside += in;
    total += all;
    s.diverged.push_back(run.Diverged(options));
    if (s.diverged.back()) {
      ++s.divergence_count;
    }
    s.wall_time_s += run.wall_time_s;
  }
  s.median_final_rmse_rad = Median(s.final_rmse);
  s.mean_final_rmse_rad =
      s.final_rmse.empty()
          ? 0.0
          : std::accumulate(s.final_rmse.begin(), s.final_rmse.end(), 0.0) /
                s.final_rmse.size();
  s.sigma3_consistency =
      total == 0 ? 1.0 : static_cast<double>(inside) / static_cast<double>(total);
  return s;
}

MonteCarloSummary RunMonteCarlo(Scenario const& scenario,
                                FilterConfig const& config, int n_runs,
                                std::uint64_t base_seed,
                                MetricsOptions const& options,
                                unsigned threads,
                                std::vector<RunMetrics>* runs) {
  if (n_runs < 1) {
    throw ConfigError("n_runs must be at least 1");
  }
  scenario.Validate();
  config.Validate();
  if (threads == 0) {
    threads = std::max(1u, std::thread::hardware_concurrency());
  }
  threads = std::min<unsigned>(threads, static_cast<unsigned>(n_runs));

  std::vector<RunMetrics> results(static_cast<std::size_t>(n_runs));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next.fetch_add(1); i < n_runs; i = next.fetch_add(1)) {
      results[static_cast<std::size_t>(i)] =
          RunOnce(scenario, config, base_seed + static_cast<std::uint64_t>(i));
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned i = 0; i < threads; ++i) {
      pool.emplace_back(worker);
    }
    for (std::thread& t : pool) {
      t.join();
    }
  }

  MonteCarloSummary summary = Summarize(results, options);
  summary.strategy = config.fiducial;
  if (runs != nullptr) {
    *runs = std::move(results);
  }
  return summary;
}

ComparisonReport CompareFiducials(Scenario const& scenario,
                                  FilterConfig const& config_template,
                                  int n_runs, std::uint64_t base_seed,
                                  MetricsOptions const& options,
                                  FiducialStrategy first,
                                  FiducialStrategy second, unsigned threads) {
  FilterConfig first_config = config_template;
  first_config.fiducial = first;
  FilterConfig second_config = config_template;
  second_config.fiducial = second;

  ComparisonReport report;
  report.first = RunMonteCarlo(scenario, first_config, n_runs, base_seed,
                               options, threads);
  report.second = RunMonteCarlo(scenario, second_config, n_runs, base_seed,
                                options, threads);
  for (int i = 0; i < n_runs; ++i) {
    auto const idx = static_cast<std::size_t>(i);
    ComparisonRow row;
    row.seed = report.first.seeds[idx];
    row.first_final_rmse = report.first.final_rmse[idx];
    row.second_final_rmse = report.second.final_rmse[idx];
    row.first_diverged = report.first.diverged[idx];
    row.second_diverged = report.second.diverged[idx];
    row.same_streams =
        report.first.stream_hashes[idx] == report.second.stream_hashes[idx];
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace qpf
