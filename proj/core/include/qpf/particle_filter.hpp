#pragma once

// Quaternion particle filter with a local/global attitude representation.
//
// Particles carry a global attitude quaternion and a gyro-bias hypothesis.
// Every step the particles are propagated globally, expressed as generalized
// Rodrigues errors about a fiducial quaternion, weighted by the vector
// observations, summarized into a 6×6 (attitude error, bias) covariance and
// recomposed onto the fiducial. The fiducial is either the propagated
// previous estimate (kBaseline) or the maximum-eigenvector average of the
// predicted particles (kMmseAverage); the latter never needs a quaternion
// renormalization because the average itself is a unit eigenvector.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qpf/dynamics.hpp"
#include "qpf/quaternion.hpp"
#include "qpf/random.hpp"

namespace qpf {

enum class FiducialStrategy { kBaseline, kMmseAverage };

char const* ToString(FiducialStrategy strategy);
// "baseline" or "mmse"; throws ConfigError otherwise.
FiducialStrategy ParseFiducialStrategy(std::string const& name);

struct Particle {
  UnitQuaternion q;
  Vec3 beta = Vec3::Zero();
};

struct ParticleSet {
  std::vector<Particle> particles;
  std::vector<double> weights;

  std::size_t size() const { return particles.size(); }
};

// A particle expressed about a fiducial: attitude error plus bias.
struct LocalParticle {
  Mrp error;
  Vec3 beta = Vec3::Zero();

  Vec6 AsVector() const;
  static LocalParticle FromVector(Vec6 const& x);
};

struct StateEstimate {
  UnitQuaternion q_hat;
  Vec3 beta_hat = Vec3::Zero();
  // Blocks: attitude error in GRP units, then bias in rad/s.
  Mat6 cov = Mat6::Zero();
  double ess = 0.0;
};

struct FilterConfig {
  int n_particles = 1000;
  FiducialStrategy fiducial = FiducialStrategy::kMmseAverage;
  GrpParams grp;
  double resample_threshold = 0.5;
  // Regularization kernel bandwidth; empty selects the Silverman rule.
  std::optional<double> jitter_bandwidth;
  // Progressive correction: when one observation would push the ESS below
  // resample_threshold·N, the likelihood is applied in up to this many
  // tempered stages, each followed by resampling and regularization at the
  // partially sharpened covariance. 0 applies every update in one shot.
  int max_tempering_stages = 0;
  GyroParams gyro;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void Validate() const;
  double Bandwidth() const;
};

// h = (4 / (N (d + 2)))^(1 / (d + 4)) with d = 6.
double SilvermanBandwidth(int n_particles);

// Draws N particles from N((q0, beta0), cov0) in local coordinates about q0.
// Throws DecompositionError if cov0 is not symmetric positive semidefinite.
ParticleSet Initialize(FilterConfig const& config, UnitQuaternion const& q0,
                       Vec3 const& beta0, Mat6 const& cov0, Rng& rng);

// Per particle: ω̂ = ω_meas − β + σ_v/√dt·n, q ← Ω(ω̂, dt) q,
// β ← β + σ_u·√dt·n'. Weights are untouched.
ParticleSet Predict(ParticleSet ps, GyroMeasurement const& gyro,
                    FilterConfig const& config, Rng& rng);

// Throws DegenerateAverageError for kMmseAverage when the top eigenvalue
// repeats.
UnitQuaternion ComputeFiducial(ParticleSet const& ps,
                               StateEstimate const& prev_estimate,
                               GyroMeasurement const& gyro,
                               FilterConfig const& config);

// Throws SingularError if any particle lies at the GRP singularity.
std::vector<LocalParticle> ToLocalErrors(ParticleSet const& ps,
                                         UnitQuaternion const& fiducial,
                                         GrpParams const& grp);

std::vector<Particle> FromLocalErrors(std::span<LocalParticle const> locals,
                                      UnitQuaternion const& fiducial,
                                      GrpParams const& grp);

// Multiplies each weight by the observation likelihood (raised to
// `exponent`) in log space and renormalizes by log-sum-exp. Throws
// WeightCollapseError when no particle has a finite log-weight.
ParticleSet UpdateWeights(ParticleSet ps,
                          std::span<VectorObservation const> obs,
                          double exponent = 1.0);

std::vector<double> LogLikelihoods(ParticleSet const& ps,
                                   std::span<VectorObservation const> obs);

// Normalized weights ∝ wⁱ·exp(exponent·ℓⁱ).
std::vector<double> ReweightedLog(std::span<double const> weights,
                                  std::span<double const> log_likelihood,
                                  double exponent);

// Largest exponent in (0, remaining] keeping the reweighted ESS at or above
// target_ess (geometric bisection to 0.1%), floored at
// kMinTemperingFraction·remaining.
inline constexpr double kMinTemperingFraction = 1e-16;
double TemperingExponent(std::span<double const> weights,
                         std::span<double const> log_likelihood,
                         double remaining, double target_ess);

// 1 / Σw², clamped to [1, N].
double EffectiveSampleSize(std::span<double const> weights);

// Systematic resampling: one uniform offset, N equally spaced strata.
std::vector<std::size_t> SystematicResampleIndices(
    std::span<double const> weights, Rng& rng);
ParticleSet Resample(ParticleSet const& ps, Rng& rng);

// Adds h·L·n to each (error, bias) 6-vector, L the symmetric square root of
// `cov` after symmetrization and flooring negative eigenvalues at zero.
// Throws DecompositionError on non-finite covariance.
std::vector<LocalParticle> Regularize(std::vector<LocalParticle> locals,
                                      Mat6 const& cov, double bandwidth,
                                      Rng& rng);

// Weighted mean and covariance of the local particles; the mean error is
// mapped back through the exact GRP inverse and composed onto the fiducial.
StateEstimate EstimateState(std::span<LocalParticle const> locals,
                            std::span<double const> weights,
                            UnitQuaternion const& fiducial,
                            GrpParams const& grp);

// Symmetrizes and floors negative eigenvalues at zero.
Mat6 RepairCovariance(Mat6 const& cov);

enum class StepIssue {
  kDegenerateAverage,
  kWeightCollapse,
  kSingular,
  kDecomposition,
};

char const* ToString(StepIssue issue);

struct StepReport {
  StateEstimate estimate;
  UnitQuaternion fiducial;
  bool resampled = false;
  int tempering_stages = 0;
  std::vector<std::pair<StepIssue, std::string>> issues;
};

class QuaternionParticleFilter {
 public:
  QuaternionParticleFilter(FilterConfig config, UnitQuaternion const& q0,
                           Vec3 const& beta0, Mat6 const& cov0);

  // One filter cycle at the configured dt. `obs` may be empty for a
  // propagation-only step. Sub-operation failures are recorded in the
  // report; the filter keeps running.
  StepReport Step(GyroMeasurement const& gyro,
                  std::span<VectorObservation const> obs);

  StateEstimate const& estimate() const { return estimate_; }
  ParticleSet const& particles() const { return particles_; }
  FilterConfig const& config() const { return config_; }

 private:
  void Assimilate(std::span<VectorObservation const> obs,
                  UnitQuaternion const& fiducial,
                  std::vector<LocalParticle>& locals, StepReport& report);
  void ResampleAndRegularize(std::vector<LocalParticle>& locals,
                             Mat6 const& cov, StepReport& report);

  FilterConfig config_;
  Rng rng_;
  ParticleSet particles_;
  StateEstimate estimate_;
};

}  // namespace qpf
