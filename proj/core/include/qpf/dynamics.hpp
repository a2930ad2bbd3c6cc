#pragma once

// Truth and sensor models: attitude truth under a prescribed body rate, a
// Farrenkopf gyro (white noise plus random-walk bias) and vector
// observations with isotropic Gaussian noise.

#include <span>
#include <vector>

#include "qpf/quaternion.hpp"
#include "qpf/random.hpp"

namespace qpf {

struct GyroParams {
  double sigma_v = 0.0;  // rad/s^(1/2), angle random walk
  double sigma_u = 0.0;  // rad/s^(3/2), rate random walk
  double dt = 1.0;       // s

  // Throws InvalidArgument on negative densities or dt ≤ 0.
  void Validate() const;
};

struct GyroMeasurement {
  Vec3 omega_meas = Vec3::Zero();
  double t = 0.0;
};

struct VectorObservation {
  Vec3 reference = Vec3::UnitX();  // inertial, unit
  Vec3 measured = Vec3::UnitX();   // body
  double sigma = 1.0;              // rad, per axis
};

struct TruthState {
  UnitQuaternion q_true;
  Vec3 beta_true = Vec3::Zero();
  Vec3 omega_true = Vec3::Zero();
  double t = 0.0;
};

// Body rate as a function of time.
class RateProfile {
 public:
  enum class Kind { kConstant, kSinusoidal };

  static RateProfile Constant(Vec3 const& omega);
  // ω(t) = amplitude · sin(2π t / period).
  static RateProfile Sinusoidal(Vec3 const& amplitude, double period);

  Vec3 At(double t) const;

  Kind kind() const { return kind_; }
  Vec3 const& vector() const { return vector_; }
  double period() const { return period_; }

 private:
  Kind kind_ = Kind::kConstant;
  Vec3 vector_ = Vec3::Zero();
  double period_ = 0.0;
};

// Advances q_true by Ω(omega_true, dt), walks the bias by σ_u·√dt·n and
// samples the rate profile at the new time.
TruthState PropagateTruth(TruthState const& state, RateProfile const& profile,
                          GyroParams const& params, Rng& rng);

// omega_true + beta_true + σ_v/√dt·n.
GyroMeasurement SampleGyro(TruthState const& state, GyroParams const& params,
                           Rng& rng);

// measured = A(q_true)·reference + σ·n for each reference.
std::vector<VectorObservation> SampleObservations(
    UnitQuaternion const& q_true, std::span<Vec3 const> references,
    double sigma, Rng& rng);

// Σ −‖measured − A(q)·reference‖² / (2σ²).
double LogLikelihood(UnitQuaternion const& q,
                     std::span<VectorObservation const> obs);

}  // namespace qpf
