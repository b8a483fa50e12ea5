#pragma once

#include <random>

#include "mplnmix/linalg.hpp"

namespace mplnmix::testing {

inline Matrix random_spd(std::mt19937_64& rng, Eigen::Index d, double ridge = 0.1, double scale = 1.0) {
  std::normal_distribution<double> z(0.0, scale);
  Matrix a(d, d);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c) a(r, c) = z(rng);
  Matrix s = a * a.transpose() / static_cast<double>(d) + ridge * Matrix::Identity(d, d);
  return 0.5 * (s + s.transpose());
}

inline Vector random_vector(std::mt19937_64& rng, Eigen::Index d, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(d);
  for (Eigen::Index j = 0; j < d; ++j) v(j) = u(rng);
  return v;
}

inline Matrix random_orthogonal(std::mt19937_64& rng, Eigen::Index d) {
  std::normal_distribution<double> z(0.0, 1.0);
  Matrix a(d, d);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c) a(r, c) = z(rng);
  Eigen::HouseholderQR<Matrix> qr(a);
  return qr.householderQ();
}

inline double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace mplnmix::testing
