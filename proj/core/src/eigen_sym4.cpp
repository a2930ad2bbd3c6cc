#include "qpf/eigen_sym4.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qpf/errors.hpp"

namespace qpf {

namespace {

double MaxOffDiagonal(Mat4 const& a) {
  double largest = 0.0;
  for (int p = 0; p < 4; ++p) {
    for (int q = p + 1; q < 4; ++q) {
      largest = std::max(largest, std::abs(a(p, q)));
    }
  }
  return largest;
}

}  // namespace

EigenResult EigenSym4(Mat4 const& m) {
  Mat4 a = m.selfadjointView<Eigen::Upper>();
  if (!a.allFinite()) {
    throw ConvergenceError("Jacobi eigensolver received non-finite input");
  }
  double const threshold = 1e-14 * a.norm();
  Mat4 v = Mat4::Identity();

  int sweep = 0;
  while (MaxOffDiagonal(a) > threshold) {
    if (sweep == kMaxJacobiSweeps) {
      throw ConvergenceError("Jacobi eigensolver exceeded the sweep limit");
    }
    ++sweep;
    for (int p = 0; p < 3; ++p) {
      for (int q = p + 1; q < 4; ++q) {
        double const apq = a(p, q);
        if (apq == 0.0) {
          continue;
        }
        // Rotation angle annihilating a(p, q); t is the smaller root of
        // t² + 2θt − 1 = 0.
        double const theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        double const t = std::copysign(1.0, theta) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double const c = 1.0 / std::sqrt(t * t + 1.0);
        double const s = t * c;

        for (int k = 0; k < 4; ++k) {
          double const akp = a(k, p);
          double const akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < 4; ++k) {
          double const apk = a(p, k);
          double const aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;

        for (int k = 0; k < 4; ++k) {
          double const vkp = v(k, p);
          double const vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::array<int, 4> order;
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&a](int i, int j) { return a(i, i) > a(j, j); });

  EigenResult result;
  result.sweeps = sweep;
  for (int i = 0; i < 4; ++i) {
    result.eigenvalues[i] = a(order[i], order[i]);
    result.eigenvectors.col(i) = v.col(order[i]);
  }
  return result;
}

}  // namespace qpf
