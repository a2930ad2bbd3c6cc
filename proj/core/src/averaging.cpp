#include "qpf/averaging.hpp"

#include <cmath>
#include <string>

namespace qpf {

WeightedQuaternions::WeightedQuaternions(std::vector<UnitQuaternion> quats,
                                         std::vector<double> weights)
    : quats_(std::move(quats)), weights_(std::move(weights)) {
  if (quats_.empty()) {
    throw InvalidArgument("weighted quaternion set is empty");
  }
  if (quats_.size() != weights_.size()) {
    throw InvalidArgument("quaternion and weight counts differ");
  }
  double sum = 0.0;
  for (double const w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw InvalidArgument("weights must be finite and nonnegative");
    }
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw InvalidArgument("weights sum to " + std::to_string(sum) +
                          ", expected 1");
  }
}

WeightedQuaternions WeightedQuaternions::Uniform(
    std::vector<UnitQuaternion> quats) {
  std::vector<double> weights(quats.size(),
                              quats.empty() ? 0.0 : 1.0 / quats.size());
  return WeightedQuaternions(std::move(quats), std::move(weights));
}

Vec4 NaiveAverage(WeightedQuaternions const& wq) {
  Vec4 sum = Vec4::Zero();
  auto const quats = wq.quats();
  auto const weights = wq.weights();
  for (std::size_t i = 0; i < wq.size(); ++i) {
    sum += weights[i] * quats[i].coeffs();
  }
  return sum;
}

MomentMatrix BuildMomentMatrix(WeightedQuaternions const& wq) {
  // Neumaier summation per upper-triangle entry keeps the result within an
  // ulp or so of the exact sum regardless of particle order.
  Mat4 sum = Mat4::Zero();
  Mat4 compensation = Mat4::Zero();
  auto const quats = wq.quats();
  auto const weights = wq.weights();
  for (std::size_t i = 0; i < wq.size(); ++i) {
    Vec4 const& q = quats[i].coeffs();
    double const w = weights[i];
    for (int r = 0; r < 4; ++r) {
      for (int c = r; c < 4; ++c) {
        double const term = w * (q[r] * q[c]);
        double const t = sum(r, c) + term;
        if (std::abs(sum(r, c)) >= std::abs(term)) {
          compensation(r, c) += (sum(r, c) - t) + term;
        } else {
          compensation(r, c) += (term - t) + sum(r, c);
        }
        sum(r, c) = t;
      }
    }
  }
  MomentMatrix result;
  for (int r = 0; r < 4; ++r) {
    for (int c = r; c < 4; ++c) {
      result.m(r, c) = sum(r, c) + compensation(r, c);
      result.m(c, r) = result.m(r, c);
    }
  }
  return result;
}

DegenerateAverageError::DegenerateAverageError(UnitQuaternion eigenvector,
                                               double eigengap)
    : Error("maximum eigenvalue of the moment matrix is not unique (gap " +
            std::to_string(eigengap) + ")"),
      eigenvector_(eigenvector),
      eigengap_(eigengap) {}

UnitQuaternion CanonicalizeSign(Vec4 const& v) {
  double sign = 1.0;
  if (std::abs(v[3]) >= 1e-12) {
    sign = v[3] < 0.0 ? -1.0 : 1.0;
  } else {
    for (int i = 0; i < 4; ++i) {
      if (std::abs(v[i]) > 1e-12) {
        sign = v[i] < 0.0 ? -1.0 : 1.0;
        break;
      }
    }
  }
  return CloseToUnit(sign * v);
}

UnitQuaternion MmseAverage(WeightedQuaternions const& wq) {
  EigenResult const eig = EigenSym4(BuildMomentMatrix(wq).m);
  UnitQuaternion const q = CanonicalizeSign(eig.eigenvectors.col(0));
  double const gap = eig.eigenvalues[0] - eig.eigenvalues[1];
  if (gap <= kDegenerateEigengap) {
    throw DegenerateAverageError(q, gap);
  }
  return q;
}

}  // namespace qpf
