#include "qpf/quaternion.hpp"

#include <atomic>
#include <cmath>
#include <string>

#include "qpf/errors.hpp"

namespace qpf {

namespace {

std::atomic<std::uint64_t> large_norm_corrections{0};

void CheckUnit(Vec4 const& v) {
  double const n = v.norm();
  if (!std::isfinite(n) || std::abs(n - 1.0) > kUnitTolerance) {
    throw InvalidArgument("quaternion norm " + std::to_string(n) +
                          " is not unit");
  }
}

}  // namespace

UnitQuaternion::UnitQuaternion(Vec4 const& v) : v_(v) { CheckUnit(v_); }

UnitQuaternion::UnitQuaternion(Vec3 const& rho, double q4)
    : v_(rho.x(), rho.y(), rho.z(), q4) {
  CheckUnit(v_);
}

UnitQuaternion UnitQuaternion::FromAxisAngle(Vec3 const& axis, double angle) {
  double const n = axis.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw InvalidArgument("rotation axis must be nonzero and finite");
  }
  double const half = 0.5 * angle;
  Vec4 v;
  v << std::sin(half) * axis / n, std::cos(half);
  return CloseToUnit(v);
}

UnitQuaternion UnitQuaternion::FromRotationVector(Vec3 const& phi) {
  double const angle = phi.norm();
  if (angle == 0.0) {
    return Identity();
  }
  return FromAxisAngle(phi, angle);
}

ErrorQuaternion::ErrorQuaternion(UnitQuaternion const& q)
    : q_(q.q4() < 0.0 ? -q : q) {}

UnitQuaternion CloseToUnit(Vec4 const& v) {
  double const n = v.norm();
  if (!std::isfinite(n) || n == 0.0) {
    throw InvalidArgument("cannot close a zero or non-finite quaternion");
  }
  double const drift = std::abs(n - 1.0);
  if (drift <= kRoundingDrift) {
    return UnitQuaternion(UnitQuaternion::Unchecked{}, v);
  }
  if (drift > kClosureDriftTolerance) {
    large_norm_corrections.fetch_add(1, std::memory_order_relaxed);
  }
  return UnitQuaternion(UnitQuaternion::Unchecked{}, v / n);
}

std::uint64_t LargeNormCorrectionCount() {
  return large_norm_corrections.load(std::memory_order_relaxed);
}

void ResetLargeNormCorrectionCount() {
  large_norm_corrections.store(0, std::memory_order_relaxed);
}

Mat3 Skew(Vec3 const& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

UnitQuaternion Multiply(UnitQuaternion const& a, UnitQuaternion const& b) {
  Vec3 const ra = a.rho();
  Vec3 const rb = b.rho();
  Vec4 v;
  v << a.q4() * rb + b.q4() * ra - ra.cross(rb), a.q4() * b.q4() - ra.dot(rb);
  return CloseToUnit(v);
}

UnitQuaternion Inverse(UnitQuaternion const& q) {
  Vec4 v = q.coeffs();
  v.head<3>() = -v.head<3>();
  return UnitQuaternion(v);
}

Mat4 RateMatrix(Vec3 const& omega) {
  Mat4 m;
  m.topLeftCorner<3, 3>() = -Skew(omega);
  m.topRightCorner<3, 1>() = omega;
  m.bottomLeftCorner<1, 3>() = -omega.transpose();
  m(3, 3) = 0.0;
  return m;
}

Mat4 OmegaTransition(Vec3 const& omega, double dt) {
  double const rate = omega.norm();
  double const half_angle = 0.5 * rate * dt;
  // sin(φ)/‖ω‖, with the removable singularity at ‖ω‖ = 0 expanded.
  double const sin_over_rate =
      rate * dt < 1e-8 ? 0.5 * dt * (1.0 - half_angle * half_angle / 6.0)
                       : std::sin(half_angle) / rate;
  return std::cos(half_angle) * Mat4::Identity() +
         sin_over_rate * RateMatrix(omega);
}

UnitQuaternion Propagate(UnitQuaternion const& q, Vec3 const& omega,
                         double dt) {
  return CloseToUnit(OmegaTransition(omega, dt) * q.coeffs());
}

Mat3 AttitudeMatrix(UnitQuaternion const& q) {
  Vec3 const rho = q.rho();
  double const q4 = q.q4();
  return (q4 * q4 - rho.squaredNorm()) * Mat3::Identity() +
         2.0 * rho * rho.transpose() - 2.0 * q4 * Skew(rho);
}

ErrorQuaternion ErrorBetween(UnitQuaternion const& q_particle,
                             UnitQuaternion const& q_fiducial) {
  return ErrorQuaternion(Multiply(q_particle, Inverse(q_fiducial)));
}

UnitQuaternion ComposeGlobal(ErrorQuaternion const& dq,
                             UnitQuaternion const& q_fiducial) {
  return Multiply(dq.quaternion(), q_fiducial);
}

Mrp MrpFromError(ErrorQuaternion const& dq, GrpParams const& grp) {
  double const denom = grp.a + dq.delta_q4();
  if (denom <= 1e-6) {
    throw SingularError("error rotation at the Rodrigues singularity (a + dq4 = " +
                        std::to_string(denom) + ")");
  }
  return Mrp{grp.f * dq.delta_rho() / denom};
}

ErrorQuaternion ErrorFromMrp(Mrp const& mrp, GrpParams const& grp) {
  double const a = grp.a;
  double const f = grp.f;
  double const n2 = mrp.p.squaredNorm();
  double const dq4 =
      (-a * n2 + f * std::sqrt(f * f + (1.0 - a * a) * n2)) / (f * f + n2);
  Vec4 v;
  v << (a + dq4) * mrp.p / f, dq4;
  return ErrorQuaternion(CloseToUnit(v));
}

double RotationAngle(UnitQuaternion const& q) {
  return 2.0 * std::atan2(q.rho().norm(), std::abs(q.q4()));
}

double AngleBetween(UnitQuaternion const& a, UnitQuaternion const& b) {
  return RotationAngle(Multiply(a, Inverse(b)));
}

}  // namespace qpf
