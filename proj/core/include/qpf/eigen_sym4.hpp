#pragma once

#include <array>

#include "qpf/quaternion.hpp"

namespace qpf {

struct EigenResult {
  // Descending.
  Vec4 eigenvalues = Vec4::Zero();
  // Column i pairs with eigenvalues[i]; columns are orthonormal.
  Mat4 eigenvectors = Mat4::Identity();
  int sweeps = 0;
};

inline constexpr int kMaxJacobiSweeps = 50;

// Full eigendecomposition of a symmetric 4×4 matrix by cyclic Jacobi
// rotations. Only the upper triangle is read. Converged once every
// off-diagonal entry is ≤ 1e-14·‖m‖_F; throws ConvergenceError after
// kMaxJacobiSweeps sweeps or on non-finite input.
EigenResult EigenSym4(Mat4 const& m);

}  // namespace qpf
