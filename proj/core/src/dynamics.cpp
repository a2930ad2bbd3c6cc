#include "qpf/dynamics.hpp"

#include <cmath>
#include <numbers>

#include "qpf/errors.hpp"

namespace qpf {

void GyroParams::Validate() const {
  if (!(sigma_v >= 0.0) || !(sigma_u >= 0.0)) {
    throw InvalidArgument("gyro noise densities must be nonnegative");
  }
  if (!(dt > 0.0)) {
    throw InvalidArgument("gyro sample interval must be positive");
  }
}

RateProfile RateProfile::Constant(Vec3 const& omega) {
  RateProfile profile;
  profile.kind_ = Kind::kConstant;
  profile.vector_ = omega;
  return profile;
}

RateProfile RateProfile::Sinusoidal(Vec3 const& amplitude, double period) {
  if (!(period > 0.0)) {
    throw InvalidArgument("sinusoidal rate period must be positive");
  }
  RateProfile profile;
  profile.kind_ = Kind::kSinusoidal;
  profile.vector_ = amplitude;
  profile.period_ = period;
  return profile;
}

Vec3 RateProfile::At(double t) const {
  switch (kind_) {
    case Kind::kConstant:
      return vector_;
    case Kind::kSinusoidal:
      return vector_ * std::sin(2.0 * std::numbers::pi * t / period_);
  }
  return vector_;
}

TruthState PropagateTruth(TruthState const& state, RateProfile const& profile,
                          GyroParams const& params, Rng& rng) {
  TruthState next;
  next.q_true = Propagate(state.q_true, state.omega_true, params.dt);
  next.beta_true = state.beta_true;
  if (params.sigma_u > 0.0) {
    next.beta_true += params.sigma_u * std::sqrt(params.dt) * StandardNormal3(rng);
  }
  next.t = state.t + params.dt;
  next.omega_true = profile.At(next.t);
  return next;
}

GyroMeasurement SampleGyro(TruthState const& state, GyroParams const& params,
                           Rng& rng) {
  GyroMeasurement m;
  m.t = state.t;
  m.omega_meas = state.omega_true + state.beta_true;
  if (params.sigma_v > 0.0) {
    m.omega_meas += params.sigma_v / std::sqrt(params.dt) * StandardNormal3(rng);
  }
  return m;
}

std::vector<VectorObservation> SampleObservations(
    UnitQuaternion const& q_true, std::span<Vec3 const> references,
    double sigma, Rng& rng) {
  Mat3 const a = AttitudeMatrix(q_true);
  std::vector<VectorObservation> obs;
  obs.reserve(references.size());
  for (Vec3 const& r : references) {
    VectorObservation o;
    o.reference = r;
    o.measured = a * r;
    if (sigma > 0.0) {
      o.measured += sigma * StandardNormal3(rng);
    }
    o.sigma = sigma;
    obs.push_back(o);
  }
  return obs;
}

double LogLikelihood(UnitQuaternion const& q,
                     std::span<VectorObservation const> obs) {
  Mat3 const a = AttitudeMatrix(q);
  double total = 0.0;
  for (VectorObservation const& o : obs) {
    total -= (o.measured - a * o.reference).squaredNorm() /
             (2.0 * o.sigma * o.sigma);
  }
  return total;
}

}  // namespace qpf
