#pragma once

#include <vector>

#include "mplnmix/model.hpp"

namespace mplnmix {

/// Gaussian approximation q(theta_ig) = N(m, S) for one (observation, component) pair.
struct VariationalSite {
  Vector m;
  Matrix S;
};

/// Sites for every (observation, component) pair plus the responsibilities.
class VariationalState {
 public:
  VariationalState() = default;
  VariationalState(std::size_t n, int G) : n_(n), g_(G), sites_(n * G), resp_(Matrix::Zero(n, G)) {}

  std::size_t rows() const noexcept { return n_; }
  int components() const noexcept { return g_; }

  VariationalSite& site(std::size_t i, int g) { return sites_[i * g_ + g]; }
  const VariationalSite& site(std::size_t i, int g) const { return sites_[i * g_ + g]; }

  Matrix& resp() noexcept { return resp_; }
  const Matrix& resp() const noexcept { return resp_; }

 private:
  std::size_t n_ = 0;
  int g_ = 0;
  std::vector<VariationalSite> sites_;
  Matrix resp_;
};

/// A component with its precision matrix and log-determinant precomputed,
/// so per-observation updates never re-factorize sigma.
struct PreparedComponent {
  Vector mu;
  Matrix precision;
  double log_det_sigma = 0.0;
};

/// Throws InvalidParameter if sigma is not SPD.
PreparedComponent prepare(const Component& comp);

/// m = log(y + 0.5), S = 0.1 I.
VariationalSite initial_site(const Eigen::Ref<const Vector>& y);

/// Per-observation ELBO F(q, y), including the -sum log(y_j!) constant.
/// `log_factorial` is sum_j log(y_j!); pass a negative value to compute it here.
double elbo_obs(const Eigen::Ref<const Vector>& y, const VariationalSite& site,
                const PreparedComponent& comp, double log_factorial = -1.0);
double elbo_obs(const Eigen::Ref<const Vector>& y, const VariationalSite& site, const Component& comp);

/// Fixed-point covariance step S' = (Sigma^-1 + Diag(exp(m + diag(S)/2)))^-1.
Matrix update_S(const VariationalSite& site, const PreparedComponent& comp);
Matrix update_S(const VariationalSite& site, const Component& comp);

/// Newton mean step m' = m - S_new [exp(m + diag(S_new)/2) + Sigma^-1 (m - mu) - y].
Vector update_m(const VariationalSite& site, const Matrix& S_new, const PreparedComponent& comp,
                const Eigen::Ref<const Vector>& y);
Vector update_m(const VariationalSite& site, const Matrix& S_new, const Component& comp,
                const Eigen::Ref<const Vector>& y);

/// exp(m + diag(S)/2) + Sigma^-1 (m - mu) - y, the negated m-gradient of the ELBO.
Vector m_gradient_residual(const VariationalSite& site, const PreparedComponent& comp,
                           const Eigen::Ref<const Vector>& y);

struct InnerOptions {
  double tol = 1e-6;           ///< on max(|dm|_inf, |d diag S|_inf)
  double gradient_tol = 1e-6;  ///< on the m-gradient residual (inf-norm)
  int max_iter = 50;
  int max_halvings = 10;
};

struct InnerResult {
  VariationalSite site;
  double elbo = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Alternates the fixed-point S step and the Newton m step, each safeguarded by
/// step halving so the ELBO never decreases between accepted iterates.
InnerResult inner_optimize(const Eigen::Ref<const Vector>& y, const PreparedComponent& comp,
                           const VariationalSite& init, const InnerOptions& options = {},
                           double log_factorial = -1.0);
InnerResult inner_optimize(const Eigen::Ref<const Vector>& y, const Component& comp,
                           const VariationalSite& init, const InnerOptions& options = {});

/// z_ig = pi_g exp(F_ig) / sum_h pi_h exp(F_ih) by log-sum-exp. `elbo` is n x G.
Matrix responsibilities_from_elbo(const Matrix& elbo, const Vector& weights);

/// sum_i log sum_g pi_g exp(F_ig), the ELBO-based mixture log-likelihood.
double mixture_loglik(const Matrix& elbo, const Vector& weights);

/// n x G matrix of F_ig for the given sites.
Matrix elbo_matrix(const CountMatrix& Y, const MixtureParams& params, const VariationalState& state);

Matrix responsibilities(const CountMatrix& Y, const MixtureParams& params, const VariationalState& state);

}  // namespace mplnmix
