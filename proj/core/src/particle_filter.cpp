#include "qpf/particle_filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include <Eigen/Eigenvalues>

#include "qpf/averaging.hpp"
#include "qpf/errors.hpp"

namespace qpf {

namespace {

constexpr int kStateDim = 6;

// Symmetric square root of a repaired covariance.
Mat6 SquareRoot(Mat6 const& cov) {
  Eigen::SelfAdjointEigenSolver<Mat6> eig(cov);
  if (eig.info() != Eigen::Success) {
    throw DecompositionError("covariance eigendecomposition failed");
  }
  Vec6 const roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * roots.asDiagonal() *
         eig.eigenvectors().transpose();
}

}  // namespace

char const* ToString(FiducialStrategy strategy) {
  switch (strategy) {
    case FiducialStrategy::kBaseline:
      return "baseline";
    case FiducialStrategy::kMmseAverage:
      return "mmse";
  }
  return "unknown";
}

FiducialStrategy ParseFiducialStrategy(std::string const& name) {
  if (name == "baseline") {
    return FiducialStrategy::kBaseline;
  }
  if (name == "mmse") {
    return FiducialStrategy::kMmseAverage;
  }
  throw ConfigError("unknown fiducial strategy '" + name +
                    "' (expected baseline or mmse)");
}

char const* ToString(StepIssue issue) {
  switch (issue) {
    case StepIssue::kDegenerateAverage:
      return "degenerate_average";
    case StepIssue::kWeightCollapse:
      return "weight_collapse";
    case StepIssue::kSingular:
      return "singular";
    case StepIssue::kDecomposition:
      return "decomposition";
  }
  return "unknown";
}

Vec6 LocalParticle::AsVector() const {
  Vec6 x;
  x << error.p, beta;
  return x;
}

LocalParticle LocalParticle::FromVector(Vec6 const& x) {
  return LocalParticle{Mrp{x.head<3>()}, x.tail<3>()};
}

void FilterConfig::Validate() const {
  if (n_particles < 10) {
    throw ConfigError("n_particles must be at least 10");
  }
  if (!(resample_threshold > 0.0 && resample_threshold <= 1.0)) {
    throw ConfigError("resample_threshold must lie in (0, 1]");
  }
  if (jitter_bandwidth && !(*jitter_bandwidth >= 0.0)) {
    throw ConfigError("jitter_bandwidth must be nonnegative");
  }
  if (max_tempering_stages < 0) {
    throw ConfigError("max_tempering_stages must be nonnegative");
  }
  if (!(grp.f > 0.0) || !(grp.a >= 0.0 && grp.a <= 1.0)) {
    throw ConfigError("GRP parameters need f > 0 and 0 <= a <= 1");
  }
  try {
    gyro.Validate();
  } catch (InvalidArgument const& e) {
    throw ConfigError(e.what());
  }
}

double FilterConfig::Bandwidth() const {
  return jitter_bandwidth ? *jitter_bandwidth : SilvermanBandwidth(n_particles);
}

double SilvermanBandwidth(int n_particles) {
  double const d = kStateDim;
  return std::pow(4.0 / (n_particles * (d + 2.0)), 1.0 / (d + 4.0));
}

Mat6 RepairCovariance(Mat6 const& cov) {
  if (!cov.allFinite()) {
    throw DecompositionError("covariance has non-finite entries");
  }
  Mat6 const sym = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Mat6> eig(sym);
  if (eig.info() != Eigen::Success) {
    throw DecompositionError("covariance eigendecomposition failed");
  }
  if (eig.eigenvalues().minCoeff() >= 0.0) {
    return sym;
  }
  Vec6 const floored = eig.eigenvalues().cwiseMax(0.0);
  Mat6 repaired = eig.eigenvectors() * floored.asDiagonal() *
                  eig.eigenvectors().transpose();
  return 0.5 * (repaired + repaired.transpose());
}

ParticleSet Initialize(FilterConfig const& config, UnitQuaternion const& q0,
                       Vec3 const& beta0, Mat6 const& cov0, Rng& rng) {
  config.Validate();
  if (!cov0.allFinite()) {
    throw DecompositionError("initial covariance has non-finite entries");
  }
  double const scale = std::max(1.0, cov0.norm());
  if ((cov0 - cov0.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw DecompositionError("initial covariance is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat6> eig(cov0);
  if (eig.info() != Eigen::Success ||
      eig.eigenvalues().minCoeff() < -1e-12 * scale) {
    throw DecompositionError("initial covariance is not positive semidefinite");
  }
  Mat6 const root = SquareRoot(cov0);
  bool const zero_cov = cov0.isZero(0.0);

  std::size_t const n = static_cast<std::size_t>(config.n_particles);
  ParticleSet ps;
  ps.particles.reserve(n);
  ps.weights.assign(n, 1.0 / static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (zero_cov) {
      ps.particles.push_back(Particle{q0, beta0});
      continue;
    }
    LocalParticle const x =
        LocalParticle::FromVector(root * StandardNormal6(rng));
    ps.particles.push_back(Particle{
        ComposeGlobal(ErrorFromMrp(x.error, config.grp), q0), beta0 + x.beta});
  }
  return ps;
}

ParticleSet Predict(ParticleSet ps, GyroMeasurement const& gyro,
                    FilterConfig const& config, Rng& rng) {
  GyroParams const& g = config.gyro;
  double const rate_noise = g.sigma_v / std::sqrt(g.dt);
  double const bias_noise = g.sigma_u * std::sqrt(g.dt);
  for (Particle& particle : ps.particles) {
    Vec3 omega = gyro.omega_meas - particle.beta;
    if (rate_noise > 0.0) {
      omega += rate_noise * StandardNormal3(rng);
    }
    particle.q = Propagate(particle.q, omega, g.dt);
    if (bias_noise > 0.0) {
      particle.beta += bias_noise * StandardNormal3(rng);
    }
  }
  return ps;
}

UnitQuaternion ComputeFiducial(ParticleSet const& ps,
                               StateEstimate const& prev_estimate,
                               GyroMeasurement const& gyro,
                               FilterConfig const& config) {
  if (ps.particles.empty()) {
    throw InvalidArgument("cannot compute a fiducial from no particles");
  }
  switch (config.fiducial) {
    case FiducialStrategy::kBaseline:
      return Propagate(prev_estimate.q_hat,
                       gyro.omega_meas - prev_estimate.beta_hat,
                       config.gyro.dt);
    case FiducialStrategy::kMmseAverage: {
      std::vector<UnitQuaternion> quats;
      quats.reserve(ps.size());
      for (Particle const& p : ps.particles) {
        quats.push_back(p.q);
      }
      return MmseAverage(WeightedQuaternions(std::move(quats), ps.weights));
    }
  }
  throw InvalidArgument("unknown fiducial strategy");
}

std::vector<LocalParticle> ToLocalErrors(ParticleSet const& ps,
                                         UnitQuaternion const& fiducial,
                                         GrpParams const& grp) {
  std::vector<LocalParticle> locals;
  locals.reserve(ps.size());
  UnitQuaternion const fiducial_inverse = Inverse(fiducial);
  for (Particle const& p : ps.particles) {
    ErrorQuaternion const dq(Multiply(p.q, fiducial_inverse));
    locals.push_back(LocalParticle{MrpFromError(dq, grp), p.beta});
  }
  return locals;
}

std::vector<Particle> FromLocalErrors(std::span<LocalParticle const> locals,
                                      UnitQuaternion const& fiducial,
                                      GrpParams const& grp) {
  std::vector<Particle> particles;
  particles.reserve(locals.size());
  for (LocalParticle const& l : locals) {
    particles.push_back(
        Particle{ComposeGlobal(ErrorFromMrp(l.error, grp), fiducial), l.beta});
  }
  return particles;
}

std::vector<double> LogLikelihoods(ParticleSet const& ps,
                                   std::span<VectorObservation const> obs) {
  if (obs.empty()) {
    throw InvalidArgument("weight update needs at least one observation");
  }
  std::vector<double> log_likelihood(ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    log_likelihood[i] = LogLikelihood(ps.particles[i].q, obs);
  }
  return log_likelihood;
}

std::vector<double> ReweightedLog(std::span<double const> weights,
                                  std::span<double const> log_likelihood,
                                  double exponent) {
  std::vector<double> normalized(weights.size());
  double max_log_w = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < weights.size(); ++i) {
    double const log_w = std::log(weights[i]) + exponent * log_likelihood[i];
    normalized[i] = log_w;
    if (log_w > max_log_w) {
      max_log_w = log_w;
    }
  }
  if (!std::isfinite(max_log_w)) {
    throw WeightCollapseError("no particle has a finite log-weight");
  }
  double sum = 0.0;
  for (double& w : normalized) {
    w = std::isnan(w) ? 0.0 : std::exp(w - max_log_w);
    sum += w;
  }
  for (double& w : normalized) {
    w /= sum;
  }
  return normalized;
}

ParticleSet UpdateWeights(ParticleSet ps,
                          std::span<VectorObservation const> obs,
                          double exponent) {
  ps.weights = ReweightedLog(ps.weights, LogLikelihoods(ps, obs), exponent);
  return ps;
}

double TemperingExponent(std::span<double const> weights,
                         std::span<double const> log_likelihood,
                         double remaining, double target_ess) {
  auto ess_at = [&](double exponent) {
    return EffectiveSampleSize(ReweightedLog(weights, log_likelihood, exponent));
  };
  if (ess_at(remaining) >= target_ess) {
    return remaining;
  }
  double lo = kMinTemperingFraction * remaining;
  if (ess_at(lo) < target_ess) {
    return lo;
  }
  double hi = remaining;
  for (int i = 0; i < 64 && hi > lo * (1.0 + 1e-3); ++i) {
    double const mid = std::sqrt(lo * hi);
    if (ess_at(mid) >= target_ess) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

double EffectiveSampleSize(std::span<double const> weights) {
  double sum_sq = 0.0;
  for (double const w : weights) {
    sum_sq += w * w;
  }
  double const n = static_cast<double>(weights.size());
  return std::clamp(1.0 / sum_sq, 1.0, n);
}

std::vector<std::size_t> SystematicResampleIndices(
    std::span<double const> weights, Rng& rng) {
  std::size_t const n = weights.size();
  std::vector<std::size_t> indices(n);
  double const step = 1.0 / static_cast<double>(n);
  double const offset = std::uniform_real_distribution<double>(0.0, step)(rng);
  double cumulative = weights.empty() ? 0.0 : weights[0];
  std::size_t source = 0;
  for (std::size_t j = 0; j < n; ++j) {
    double const position = offset + static_cast<double>(j) * step;
    while (position > cumulative && source + 1 < n) {
      ++source;
      cumulative += weights[source];
    }
    indices[j] = source;
  }
  return indices;
}

ParticleSet Resample(ParticleSet const& ps, Rng& rng) {
  std::vector<std::size_t> const indices =
      SystematicResampleIndices(ps.weights, rng);
  ParticleSet out;
  out.particles.reserve(ps.size());
  for (std::size_t const i : indices) {
    out.particles.push_back(ps.particles[i]);
  }
  out.weights.assign(ps.size(), 1.0 / static_cast<double>(ps.size()));
  return out;
}

std::vector<LocalParticle> Regularize(std::vector<LocalParticle> locals,
                                      Mat6 const& cov, double bandwidth,
                                      Rng& rng) {
  if (!std::isfinite(bandwidth) || bandwidth < 0.0) {
    throw InvalidArgument("bandwidth must be finite and nonnegative");
  }
  Mat6 const repaired = RepairCovariance(cov);
  if (bandwidth == 0.0 || repaired.isZero(0.0)) {
    return locals;
  }
  Mat6 const kernel = bandwidth * SquareRoot(repaired);
  for (LocalParticle& l : locals) {
    l = LocalParticle::FromVector(l.AsVector() + kernel * StandardNormal6(rng));
  }
  return locals;
}

StateEstimate EstimateState(std::span<LocalParticle const> locals,
                            std::span<double const> weights,
                            UnitQuaternion const& fiducial,
                            GrpParams const& grp) {
  if (locals.empty() || locals.size() != weights.size()) {
    throw InvalidArgument("estimate needs matching, nonempty locals/weights");
  }
  Vec6 mean = Vec6::Zero();
  for (std::size_t i = 0; i < locals.size(); ++i) {
    mean += weights[i] * locals[i].AsVector();
  }
  Mat6 cov = Mat6::Zero();
  for (std::size_t i = 0; i < locals.size(); ++i) {
    Vec6 const d = locals[i].AsVector() - mean;
    cov.noalias() += weights[i] * d * d.transpose();
  }

  StateEstimate est;
  est.q_hat = ComposeGlobal(ErrorFromMrp(Mrp{mean.head<3>()}, grp), fiducial);
  est.beta_hat = mean.tail<3>();
  est.cov = RepairCovariance(cov);
  est.ess = EffectiveSampleSize(weights);
  return est;
}

QuaternionParticleFilter::QuaternionParticleFilter(FilterConfig config,
                                                   UnitQuaternion const& q0,
                                                   Vec3 const& beta0,
                                                   Mat6 const& cov0)
    : config_(std::move(config)), rng_(MakeRng(config_.seed)) {
  particles_ = Initialize(config_, q0, beta0, cov0, rng_);
  estimate_.q_hat = q0;
  estimate_.beta_hat = beta0;
  estimate_.cov = cov0;
  estimate_.ess = static_cast<double>(config_.n_particles);
}

void QuaternionParticleFilter::ResampleAndRegularize(
    std::vector<LocalParticle>& locals, Mat6 const& cov, StepReport& report) {
  std::vector<std::size_t> const indices =
      SystematicResampleIndices(particles_.weights, rng_);
  std::vector<LocalParticle> survivors;
  survivors.reserve(indices.size());
  for (std::size_t const i : indices) {
    survivors.push_back(locals[i]);
  }
  locals = std::move(survivors);
  std::fill(particles_.weights.begin(), particles_.weights.end(),
            1.0 / static_cast<double>(particles_.size()));
  try {
    locals = Regularize(locals, cov, config_.Bandwidth(), rng_);
  } catch (DecompositionError const& e) {
    report.issues.emplace_back(StepIssue::kDecomposition, e.what());
  }
  report.resampled = true;
}

void QuaternionParticleFilter::Assimilate(
    std::span<VectorObservation const> obs, UnitQuaternion const& fiducial,
    std::vector<LocalParticle>& locals, StepReport& report) {
  double const target_ess =
      config_.resample_threshold * static_cast<double>(particles_.size());
  double remaining = 1.0;
  for (int stage = 0; stage < config_.max_tempering_stages; ++stage) {
    std::vector<double> const log_likelihood = LogLikelihoods(particles_, obs);
    double const exponent = TemperingExponent(
        particles_.weights, log_likelihood, remaining, target_ess);
    if (exponent >= remaining) {
      break;
    }
    // Partial update, then resample and jitter at the resolution of the
    // partially sharpened posterior before continuing.
    particles_.weights =
        ReweightedLog(particles_.weights, log_likelihood, exponent);
    remaining -= exponent;
    StateEstimate const partial =
        EstimateState(locals, particles_.weights, fiducial, config_.grp);
    ResampleAndRegularize(locals, partial.cov, report);
    particles_.particles = FromLocalErrors(locals, fiducial, config_.grp);
    ++report.tempering_stages;
  }
  particles_ = UpdateWeights(particles_, obs, remaining);
}

StepReport QuaternionParticleFilter::Step(
    GyroMeasurement const& gyro, std::span<VectorObservation const> obs) {
  StepReport report;
  particles_ = Predict(std::move(particles_), gyro, config_, rng_);

  UnitQuaternion fiducial;
  try {
    fiducial = ComputeFiducial(particles_, estimate_, gyro, config_);
  } catch (DegenerateAverageError const& e) {
    report.issues.emplace_back(StepIssue::kDegenerateAverage, e.what());
    fiducial = e.eigenvector();
  }
  report.fiducial = fiducial;

  std::vector<LocalParticle> locals;
  try {
    locals = ToLocalErrors(particles_, fiducial, config_.grp);
  } catch (SingularError const& e) {
    // Particles cannot be expressed about this fiducial; carry them forward
    // unchanged and report the propagated fiducial as the estimate.
    report.issues.emplace_back(StepIssue::kSingular, e.what());
    estimate_.q_hat = fiducial;
    report.estimate = estimate_;
    return report;
  }

  if (!obs.empty()) {
    try {
      Assimilate(obs, fiducial, locals, report);
    } catch (WeightCollapseError const& e) {
      report.issues.emplace_back(StepIssue::kWeightCollapse, e.what());
      std::fill(particles_.weights.begin(), particles_.weights.end(),
                1.0 / static_cast<double>(particles_.size()));
    }
  }

  estimate_ = EstimateState(locals, particles_.weights, fiducial, config_.grp);
  report.estimate = estimate_;

  double const n = static_cast<double>(particles_.size());
  if (estimate_.ess < config_.resample_threshold * n) {
    ResampleAndRegularize(locals, estimate_.cov, report);
  }

  particles_.particles = FromLocalErrors(locals, fiducial, config_.grp);
  return report;
}

}  // namespace qpf
