#pragma once

// Quaternion and generalized Rodrigues parameter algebra.
//
// Quaternions are stored scalar-last, q = [rho; q4], and compose with the
// Shuster product: A(a ⊗ b) = A(a) A(b), where A(q) maps reference-frame
// vectors into the body frame.

#include <cstdint>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace qpf {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// Largest norm deviation accepted when constructing a unit quaternion.
inline constexpr double kUnitTolerance = 1e-9;

class UnitQuaternion {
 public:
  // Identity rotation.
  UnitQuaternion() : v_(0.0, 0.0, 0.0, 1.0) {}

  // Scalar-last components; throws InvalidArgument unless
  // |‖v‖ − 1| ≤ kUnitTolerance. The value is stored as given.
  explicit UnitQuaternion(Vec4 const& v);
  UnitQuaternion(Vec3 const& rho, double q4);

  static UnitQuaternion Identity() { return {}; }

  // Rotation of `angle` radians about `axis` (normalized internally).
  static UnitQuaternion FromAxisAngle(Vec3 const& axis, double angle);

  // Rotation vector (axis × angle). Zero maps to identity.
  static UnitQuaternion FromRotationVector(Vec3 const& phi);

  Vec3 rho() const { return v_.head<3>(); }
  double q4() const { return v_[3]; }
  Vec4 const& coeffs() const { return v_; }
  double operator[](int i) const { return v_[i]; }

  UnitQuaternion operator-() const { return UnitQuaternion(Unchecked{}, -v_); }

  // Component-wise equality; q and −q compare unequal here.
  friend bool operator==(UnitQuaternion const& a, UnitQuaternion const& b) {
    return a.v_ == b.v_;
  }

 private:
  struct Unchecked {};
  UnitQuaternion(Unchecked, Vec4 const& v) : v_(v) {}

  friend UnitQuaternion CloseToUnit(Vec4 const& v);

  Vec4 v_;
};

// Small rotation δq = q_particle ⊗ q_fiducial⁻¹, always stored with
// delta_q4 ≥ 0.
class ErrorQuaternion {
 public:
  ErrorQuaternion() = default;

  // Canonicalizes the sign so that delta_q4 ≥ 0.
  explicit ErrorQuaternion(UnitQuaternion const& q);

  Vec3 delta_rho() const { return q_.rho(); }
  double delta_q4() const { return q_.q4(); }
  UnitQuaternion const& quaternion() const { return q_; }

 private:
  UnitQuaternion q_;
};

// Generalized Rodrigues parameters p = f·δρ/(a + δq4). a = f = 1 gives the
// classical modified Rodrigues parameters; f = 2(a + 1) makes ‖p‖ match the
// rotation angle to first order.
struct GrpParams {
  double a = 1.0;
  double f = 1.0;

  // Radians of rotation per unit of ‖p‖ for small errors.
  double small_angle_scale() const { return 2.0 * (a + 1.0) / f; }
};

struct Mrp {
  Vec3 p = Vec3::Zero();
};

// Renormalizes a quaternion produced by a closed operation (product,
// orthogonal transition) whose norm can only have drifted by rounding.
// Values within kRoundingDrift of unit norm are returned untouched, so exact
// identities (q ⊗ 1 = q, Ω(0)·q = q) hold bit for bit. Corrections larger
// than kClosureDriftTolerance are counted; a nonzero count means something
// upstream relied on brute-force normalization.
inline constexpr double kRoundingDrift = 1e-15;
inline constexpr double kClosureDriftTolerance = 1e-12;
UnitQuaternion CloseToUnit(Vec4 const& v);
std::uint64_t LargeNormCorrectionCount();
void ResetLargeNormCorrectionCount();

UnitQuaternion Multiply(UnitQuaternion const& a, UnitQuaternion const& b);
UnitQuaternion Inverse(UnitQuaternion const& q);

// Discrete transition Ω with q(t + dt) = Ω q(t) for a constant body rate.
Mat4 OmegaTransition(Vec3 const& omega, double dt);

// Ω(omega, dt)·q.
UnitQuaternion Propagate(UnitQuaternion const& q, Vec3 const& omega,
                         double dt);

// Ξ(ω): q̇ = ½ Ξ(ω) q.
Mat4 RateMatrix(Vec3 const& omega);

Mat3 AttitudeMatrix(UnitQuaternion const& q);

ErrorQuaternion ErrorBetween(UnitQuaternion const& q_particle,
                             UnitQuaternion const& q_fiducial);
UnitQuaternion ComposeGlobal(ErrorQuaternion const& dq,
                             UnitQuaternion const& q_fiducial);

// Throws SingularError when a + δq4 ≤ 1e-6.
Mrp MrpFromError(ErrorQuaternion const& dq, GrpParams const& grp);
ErrorQuaternion ErrorFromMrp(Mrp const& mrp, GrpParams const& grp);

// Rotation angle of q in [0, π].
double RotationAngle(UnitQuaternion const& q);

// Geodesic angle between two attitudes in [0, π]; invariant to the sign of
// either argument.
double AngleBetween(UnitQuaternion const& a, UnitQuaternion const& b);

Mat3 Skew(Vec3 const& v);

}  // namespace qpf
