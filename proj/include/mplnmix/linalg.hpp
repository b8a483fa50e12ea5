#pragma once

#include <Eigen/Dense>

namespace mplnmix {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Returns true when `a` is symmetric (relative tolerance) and its Cholesky
/// pivots all exceed 1e-10 times the largest diagonal entry.
bool is_spd(const Matrix& a);

/// Throws InvalidParameter naming `what` unless `a` passes is_spd.
void require_spd(const Matrix& a, const char* what);

/// Inverse and log-determinant of an SPD matrix via Cholesky.
struct SpdInverse {
  Matrix inverse;
  double log_det = 0.0;
};
SpdInverse spd_inverse(const Matrix& a, const char* what);

inline Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

}  // namespace mplnmix
