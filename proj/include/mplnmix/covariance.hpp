#pragma once

#include <span>
#include <vector>

#include "mplnmix/model.hpp"
#include "mplnmix/variational.hpp"

namespace mplnmix {

/// Responsibility-weighted second moment of one component's variational sites.
struct GroupScatter {
  double size = 0.0;  ///< n_g = sum_i z_ig
  Matrix cov;         ///< sum_i z_ig [(m_ig - mu_g)(m_ig - mu_g)' + S_ig] / n_g
};

/// Scatter of component g. `resp_col` holds z_ig for i = 0..n-1.
GroupScatter sample_cov(const Vector& resp_col, std::span<const VariationalSite> sites, const Vector& mu);
GroupScatter sample_cov(const Vector& resp_col, const VariationalState& state, int g, const Vector& mu);

/// sigma = volume * orientation * Diag(shape) * orientation', det(Diag(shape)) = 1,
/// shape sorted in descending order.
struct EigenDecomposition {
  double volume = 0.0;
  Vector shape;
  Matrix orientation;

  Matrix reconstruct() const;
};

EigenDecomposition decompose(const Matrix& sigma);

/// Result of a constrained M-step, kept in decomposed form.
///
/// `volumes` has 1 entry for shared-volume models and G otherwise. `shapes` is
/// empty for spherical models (A = I), or holds 1 or G unit-determinant
/// diagonals. `orientations` is empty for axis-aligned models (D = I), or
/// holds 1 or G orthogonal matrices. `sigmas` are the reconstructed matrices.
struct ConstrainedCovariance {
  CovarianceModel model = CovarianceModel::VVV;
  std::vector<double> volumes;
  std::vector<Vector> shapes;
  std::vector<Matrix> orientations;
  std::vector<Matrix> sigmas;

  /// Criterion values after each majorization step (VVE only).
  std::vector<double> mm_trace;
  bool jittered = false;

  Vector shape(std::size_t g) const;
  Matrix orientation(std::size_t g) const;
  double volume(std::size_t g) const { return volumes.size() == 1 ? volumes[0] : volumes[g]; }

  /// Free numbers carried by the decomposed representation.
  int free_parameters() const;
};

/// sum_g n_g [log|sigma_g| + tr(sigma_g^-1 scatter_g)]; lower is better.
double gaussian_criterion(std::span<const GroupScatter> scatters, std::span<const Matrix> sigmas);

struct MStepOptions {
  double mm_tol = 1e-8;
  int mm_max_iter = 100;
};

/// Constrained covariance estimates minimizing gaussian_criterion within the
/// model's class. For VVE, `warm` (a previous VVE solution) is used as a
/// second starting orientation and the better of the two solutions is kept.
ConstrainedCovariance mstep_cov(CovarianceModel model, std::span<const GroupScatter> scatters,
                                const ConstrainedCovariance* warm = nullptr, const MStepOptions& options = {});

}  // namespace mplnmix
