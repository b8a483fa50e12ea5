#include "mplnmix/covariance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mplnmix/errors.hpp"

namespace mplnmix {

namespace {

template <typename SiteAt>
GroupScatter scatter_impl(const Vector& resp_col, std::size_t n, SiteAt&& site_at, const Vector& mu) {
  if (static_cast<std::size_t>(resp_col.size()) != n) {
    throw InvalidParameter("responsibility column length does not match sites");
  }
  const Eigen::Index d = mu.size();
  GroupScatter out;
  out.size = resp_col.sum();
  if (!(out.size > 0.0)) throw EmptyComponent("component has zero effective size");
  out.cov = Matrix::Zero(d, d);
  Vector diff(d);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = resp_col(static_cast<Eigen::Index>(i));
    if (z == 0.0) continue;
    const VariationalSite& s = site_at(i);
    diff = s.m - mu;
    out.cov.noalias() += z * (diff * diff.transpose() + s.S);
  }
  out.cov = symmetrize(out.cov / out.size);
  return out;
}

// Eigenvalues in descending order with matching eigenvector columns.
void sorted_eigen(const Matrix& a, Vector& values, Matrix& vectors) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a));
  if (es.info() != Eigen::Success) throw DegenerateScatter("eigen-decomposition failed");
  values = es.eigenvalues().reverse();
  vectors = es.eigenvectors().rowwise().reverse();
}

double geometric_mean(const Vector& v) { return std::exp(v.array().log().mean()); }

double total_size(std::span<const GroupScatter> scatters) {
  double n = 0.0;
  for (const auto& s : scatters) n += s.size;
  return n;
}

Matrix pooled(std::span<const GroupScatter> scatters) {
  Matrix w = Matrix::Zero(scatters[0].cov.rows(), scatters[0].cov.cols());
  for (const auto& s : scatters) w += s.size * s.cov;
  return symmetrize(w / total_size(scatters));
}

void reconstruct_all(ConstrainedCovariance& c, std::size_t G, Eigen::Index d) {
  c.sigmas.assign(G, Matrix());
  const bool shared_sigma = c.volumes.size() == 1 && c.shapes.size() <= 1 && c.orientations.size() <= 1;
  for (std::size_t g = 0; g < G; ++g) {
    if (shared_sigma && g > 0) {
      c.sigmas[g] = c.sigmas[0];
      continue;
    }
    const Vector e = c.shapes.empty() ? Vector::Constant(d, c.volume(g)) : Vector(c.volume(g) * c.shape(g));
    if (c.orientations.empty()) {
      c.sigmas[g] = e.asDiagonal();
    } else {
      const Matrix& D = c.orientations.size() == 1 ? c.orientations[0] : c.orientations[g];
      c.sigmas[g] = symmetrize(D * e.asDiagonal() * D.transpose());
    }
  }
}

// Adds a common ridge to every core when any is near-singular, so shared
// volume/shape/orientation stay shared. Cores are per-slot eigenvalue vectors.
bool guard_degeneracy(std::vector<Vector>& cores) {
  bool degenerate = false;
  double mean_diag = 0.0;
  for (const Vector& e : cores) {
    if (!e.allFinite()) throw DegenerateScatter("non-finite covariance estimate");
    if (!(e.maxCoeff() > 0.0) || e.minCoeff() < 1e-8 * e.maxCoeff()) degenerate = true;
    mean_diag += e.mean() / static_cast<double>(cores.size());
  }
  if (!degenerate) return false;
  const double ridge = 1e-6 * mean_diag;
  if (!(ridge > 0.0)) throw DegenerateScatter("covariance estimate collapsed to zero");
  for (Vector& e : cores) {
    e.array() += ridge;
    if (!(e.minCoeff() > 0.0)) throw DegenerateScatter("covariance estimate remains singular");
  }
  return true;
}

// Splits cores into volumes and unit-determinant shapes.
void set_cores(ConstrainedCovariance& c, const std::vector<Vector>& cores, bool spherical) {
  for (const Vector& e : cores) {
    c.volumes.push_back(spherical ? e(0) : geometric_mean(e));
    if (!spherical) c.shapes.push_back(e / c.volumes.back());
  }
}

struct VveSolution {
  Matrix orientation;
  std::vector<Vector> cores;
  double criterion = 0.0;
  std::vector<double> trace;
};

// Minimizes sum_g n_g [log|B_g| + tr(B_g^-1 D' S_g D)] over orthogonal D and
// diagonal B_g by alternating the closed-form B_g = diag(D' S_g D) with one
// majorization step for D: with W_g = n_g S_g and alpha_g >= lambda_max(W_g),
// D <- R P' where P L R' is the SVD of sum_g B_g^-1 D' (alpha_g I - W_g).
VveSolution solve_vve(std::span<const GroupScatter> scatters, Matrix orientation, const MStepOptions& options) {
  const std::size_t G = scatters.size();
  const Eigen::Index d = orientation.rows();
  std::vector<double> alpha(G);
  for (std::size_t g = 0; g < G; ++g) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(scatters[g].size * scatters[g].cov, Eigen::EigenvaluesOnly);
    alpha[g] = es.eigenvalues().maxCoeff() * (1.0 + 1e-6) + 1e-300;
  }
  VveSolution sol;
  sol.cores.assign(G, Vector());
  auto update_cores = [&](const Matrix& D) {
    double crit = 0.0;
    for (std::size_t g = 0; g < G; ++g) {
      sol.cores[g] = (D.transpose() * scatters[g].cov * D).diagonal();
      crit += scatters[g].size * (sol.cores[g].array().log().sum() + static_cast<double>(d));
    }
    return crit;
  };
  sol.orientation = std::move(orientation);
  sol.criterion = update_cores(sol.orientation);
  sol.trace.push_back(sol.criterion);
  const Matrix identity = Matrix::Identity(d, d);
  for (int it = 0; it < options.mm_max_iter; ++it) {
    Matrix f = Matrix::Zero(d, d);
    for (std::size_t g = 0; g < G; ++g) {
      const Matrix w = scatters[g].size * scatters[g].cov;
      f += sol.cores[g].cwiseInverse().asDiagonal() * sol.orientation.transpose() * (alpha[g] * identity - w);
    }
    Eigen::JacobiSVD<Matrix> svd(f, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Matrix next = svd.matrixV() * svd.matrixU().transpose();
    std::vector<Vector> saved = sol.cores;
    const double crit = update_cores(next);
    if (!(crit <= sol.criterion)) {
      // Rounding-level increase at the optimum: keep the previous iterate.
      sol.cores = std::move(saved);
      break;
    }
    const double change = sol.criterion - crit;
    sol.orientation = std::move(next);
    sol.criterion = crit;
    sol.trace.push_back(crit);
    if (change < options.mm_tol) break;
  }
  return sol;
}

}  // namespace

GroupScatter sample_cov(const Vector& resp_col, std::span<const VariationalSite> sites, const Vector& mu) {
  return scatter_impl(resp_col, sites.size(), [&](std::size_t i) -> const VariationalSite& { return sites[i]; }, mu);
}

GroupScatter sample_cov(const Vector& resp_col, const VariationalState& state, int g, const Vector& mu) {
  return scatter_impl(resp_col, state.rows(),
                      [&](std::size_t i) -> const VariationalSite& { return state.site(i, g); }, mu);
}

Matrix EigenDecomposition::reconstruct() const {
  return symmetrize(volume * orientation * shape.asDiagonal() * orientation.transpose());
}

EigenDecomposition decompose(const Matrix& sigma) {
  if (!is_spd(sigma)) throw InvalidParameter("decompose requires a symmetric positive definite matrix");
  Vector values;
  Matrix vectors;
  sorted_eigen(sigma, values, vectors);
  if (!(values.minCoeff() > 0.0)) throw InvalidParameter("decompose requires a positive definite matrix");
  EigenDecomposition out;
  out.volume = geometric_mean(values);
  out.shape = values / out.volume;
  out.orientation = std::move(vectors);
  return out;
}

Vector ConstrainedCovariance::shape(std::size_t g) const {
  if (shapes.empty()) return Vector::Ones(sigmas.empty() ? 0 : sigmas.front().rows());
  return shapes.size() == 1 ? shapes[0] : shapes[g];
}

Matrix ConstrainedCovariance::orientation(std::size_t g) const {
  const Eigen::Index d = sigmas.empty() ? 0 : sigmas.front().rows();
  if (orientations.empty()) return Matrix::Identity(d, d);
  return orientations.size() == 1 ? orientations[0] : orientations[g];
}

int ConstrainedCovariance::free_parameters() const {
  const int d = sigmas.empty() ? 0 : static_cast<int>(sigmas.front().rows());
  return static_cast<int>(volumes.size()) + static_cast<int>(shapes.size()) * (d - 1) +
         static_cast<int>(orientations.size()) * d * (d - 1) / 2;
}

double gaussian_criterion(std::span<const GroupScatter> scatters, std::span<const Matrix> sigmas) {
  if (scatters.size() != sigmas.size()) throw InvalidParameter("scatter and sigma counts differ");
  double total = 0.0;
  for (std::size_t g = 0; g < scatters.size(); ++g) {
    const SpdInverse inv = spd_inverse(sigmas[g], "criterion sigma");
    total += scatters[g].size * (inv.log_det + inv.inverse.cwiseProduct(scatters[g].cov).sum());
  }
  return total;
}

ConstrainedCovariance mstep_cov(CovarianceModel model, std::span<const GroupScatter> scatters,
                                const ConstrainedCovariance* warm, const MStepOptions& options) {
  if (scatters.empty()) throw InvalidParameter("mstep_cov needs at least one group");
  const std::size_t G = scatters.size();
  const Eigen::Index d = scatters[0].cov.rows();
  for (const auto& s : scatters) {
    if (!(s.size > 0.0)) throw EmptyComponent("mstep_cov received an empty group");
    if (s.cov.rows() != d || s.cov.cols() != d) throw InvalidParameter("scatter dimensions differ");
    if (!s.cov.allFinite()) throw DegenerateScatter("non-finite scatter matrix");
  }
  const double n = total_size(scatters);

  ConstrainedCovariance c;
  c.model = model;
  std::vector<Vector> cores;
  bool spherical = false;
  Vector values;
  Matrix vectors;
  switch (model) {
    case CovarianceModel::EII: {
      double acc = 0.0;
      for (const auto& s : scatters) acc += s.size * s.cov.trace();
      cores = {Vector::Constant(d, acc / (n * static_cast<double>(d)))};
      spherical = true;
      break;
    }
    case CovarianceModel::VII: {
      for (const auto& s : scatters) cores.push_back(Vector::Constant(d, s.cov.trace() / static_cast<double>(d)));
      spherical = true;
      break;
    }
    case CovarianceModel::EEI: {
      cores = {pooled(scatters).diagonal()};
      break;
    }
    case CovarianceModel::VVI: {
      for (const auto& s : scatters) cores.push_back(s.cov.diagonal());
      break;
    }
    case CovarianceModel::EEE: {
      sorted_eigen(pooled(scatters), values, vectors);
      cores = {values};
      c.orientations = {vectors};
      break;
    }
    case CovarianceModel::VVV: {
      for (const auto& s : scatters) {
        sorted_eigen(s.cov, values, vectors);
        cores.push_back(values);
        c.orientations.push_back(vectors);
      }
      break;
    }
    case CovarianceModel::EEV: {
      Vector omega = Vector::Zero(d);
      for (const auto& s : scatters) {
        sorted_eigen(s.size * s.cov, values, vectors);
        omega += values;
        c.orientations.push_back(vectors);
      }
      cores = {omega / n};
      break;
    }
    case CovarianceModel::VVE: {
      sorted_eigen(pooled(scatters), values, vectors);
      VveSolution best = solve_vve(scatters, vectors, options);
      if (warm != nullptr && warm->model == CovarianceModel::VVE && warm->orientations.size() == 1 &&
          warm->orientations[0].rows() == d) {
        VveSolution alt = solve_vve(scatters, warm->orientations[0], options);
        if (alt.criterion < best.criterion) best = std::move(alt);
      }
      cores = std::move(best.cores);
      c.orientations = {std::move(best.orientation)};
      c.mm_trace = std::move(best.trace);
      break;
    }
  }
  // Eigen-solvers can return tiny negative values for singular scatters.
  for (Vector& e : cores) e = e.cwiseMax(0.0);
  c.jittered = guard_degeneracy(cores);
  set_cores(c, cores, spherical);
  reconstruct_all(c, G, d);
  return c;
}

}  // namespace mplnmix
