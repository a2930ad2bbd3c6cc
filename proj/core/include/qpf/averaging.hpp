#pragma once

#include <span>
#include <vector>

#include "qpf/eigen_sym4.hpp"
#include "qpf/errors.hpp"
#include "qpf/quaternion.hpp"

namespace qpf {

// A non-empty set of unit quaternions with nonnegative weights summing to 1.
class WeightedQuaternions {
 public:
  // Throws InvalidArgument if the sizes differ, the set is empty, a weight
  // is negative or non-finite, or |Σw − 1| > 1e-12.
  WeightedQuaternions(std::vector<UnitQuaternion> quats,
                      std::vector<double> weights);

  // Equal weights 1/N.
  static WeightedQuaternions Uniform(std::vector<UnitQuaternion> quats);

  std::span<UnitQuaternion const> quats() const { return quats_; }
  std::span<double const> weights() const { return weights_; }
  std::size_t size() const { return quats_.size(); }

 private:
  std::vector<UnitQuaternion> quats_;
  std::vector<double> weights_;
};

struct MomentMatrix {
  Mat4 m = Mat4::Zero();
};

// Σ wⁱ qⁱ. Deliberately not normalized: antipodal or spread particles
// shrink the result below unit norm.
Vec4 NaiveAverage(WeightedQuaternions const& wq);

// M = Σ wⁱ qⁱ qⁱᵀ, accumulated in particle order with compensated
// summation. Flipping the sign of any qⁱ leaves every product, and therefore
// M, bit-identical.
MomentMatrix BuildMomentMatrix(WeightedQuaternions const& wq);

// Minimum eigengap λ₁ − λ₂ for the maximizer of qᵀMq to count as unique.
inline constexpr double kDegenerateEigengap = 1e-10;

// Raised when the top eigenvalue of M is (numerically) repeated. The
// eigenvector that would have been returned is attached so callers can
// proceed after reporting.
class DegenerateAverageError : public Error {
 public:
  DegenerateAverageError(UnitQuaternion eigenvector, double eigengap);

  UnitQuaternion const& eigenvector() const { return eigenvector_; }
  double eigengap() const { return eigengap_; }

 private:
  UnitQuaternion eigenvector_;
  double eigengap_;
};

// Unit eigenvector for the largest eigenvalue, with q4 ≥ 0 (or, when
// |q4| < 1e-12, the first component of magnitude > 1e-12 positive).
UnitQuaternion CanonicalizeSign(Vec4 const& v);

// Maximizes qᵀMq over the unit sphere. Throws DegenerateAverageError when
// λ₁ − λ₂ ≤ kDegenerateEigengap.
UnitQuaternion MmseAverage(WeightedQuaternions const& wq);

}  // namespace qpf
