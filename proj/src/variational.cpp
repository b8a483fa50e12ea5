#include "mplnmix/variational.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "mplnmix/errors.hpp"

namespace mplnmix {

namespace {

// Accepted iterates may lose at most this much ELBO to rounding.
constexpr double kAcceptSlack = 1e-12;

double sum_log_factorial(const Eigen::Ref<const Vector>& y) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < y.size(); ++j) {
    if (y(j) < 0.0) throw InvalidInput("count must be non-negative");
    s += std::lgamma(y(j) + 1.0);
  }
  return s;
}

void check_dims(const Eigen::Ref<const Vector>& y, const VariationalSite& site, const PreparedComponent& comp) {
  const Eigen::Index d = comp.mu.size();
  if (y.size() != d || site.m.size() != d || site.S.rows() != d || site.S.cols() != d) {
    throw InvalidParameter("dimension mismatch between observation, site and component");
  }
}

double log_det_llt(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

double elbo_value(const Eigen::Ref<const Vector>& y, const Vector& m, const Matrix& S, double log_det_S,
                  const PreparedComponent& comp, double log_factorial) {
  const Eigen::Index d = m.size();
  const Vector diff = m - comp.mu;
  const double quad = diff.dot(comp.precision * diff);
  const double trace = comp.precision.cwiseProduct(S).sum();
  const double rate = (m.array() + 0.5 * S.diagonal().array()).exp().sum();
  return 0.5 * log_det_S - 0.5 * quad - 0.5 * trace - 0.5 * comp.log_det_sigma +
         0.5 * static_cast<double>(d) + m.dot(y) - rate - log_factorial;
}

// F(m1, S1) - F(m0, S0) with every term differenced analytically, so the
// result keeps full relative precision when the two points nearly coincide.
double elbo_delta(const Eigen::Ref<const Vector>& y, const PreparedComponent& comp, const Vector& m0,
                  const Matrix& S0, double log_det_S0, const Vector& m1, const Matrix& S1,
                  double log_det_S1) {
  const Vector dm = m1 - m0;
  const Vector mid = m1 + m0 - 2.0 * comp.mu;
  const double quad = dm.dot(comp.precision * mid);
  const double trace = comp.precision.cwiseProduct(S1 - S0).sum();
  double rate = 0.0;
  for (Eigen::Index j = 0; j < m0.size(); ++j) {
    const double a0 = m0(j) + 0.5 * S0(j, j);
    const double a1 = m1(j) + 0.5 * S1(j, j);
    rate += std::exp(a0) * std::expm1(a1 - a0);
  }
  return 0.5 * (log_det_S1 - log_det_S0) - 0.5 * quad - 0.5 * trace + dm.dot(y) - rate;
}

}  // namespace

PreparedComponent prepare(const Component& comp) {
  if (comp.sigma.rows() != comp.mu.size() || comp.sigma.cols() != comp.mu.size()) {
    throw InvalidParameter("component mu and sigma dimensions differ");
  }
  SpdInverse inv = spd_inverse(comp.sigma, "component sigma");
  return {comp.mu, std::move(inv.inverse), inv.log_det};
}

VariationalSite initial_site(const Eigen::Ref<const Vector>& y) {
  const Eigen::Index d = y.size();
  return {(y.array() + 0.5).log().matrix(), 0.1 * Matrix::Identity(d, d)};
}

double elbo_obs(const Eigen::Ref<const Vector>& y, const VariationalSite& site, const PreparedComponent& comp,
                double log_factorial) {
  check_dims(y, site, comp);
  require_spd(site.S, "variational covariance S");
  if (log_factorial < 0.0) log_factorial = sum_log_factorial(y);
  Eigen::LLT<Matrix> llt(symmetrize(site.S));
  return elbo_value(y, site.m, site.S, log_det_llt(llt), comp, log_factorial);
}

double elbo_obs(const Eigen::Ref<const Vector>& y, const VariationalSite& site, const Component& comp) {
  return elbo_obs(y, site, prepare(comp));
}

Matrix update_S(const VariationalSite& site, const PreparedComponent& comp) {
  const Vector rate = (site.m.array() + 0.5 * site.S.diagonal().array()).exp().matrix();
  Matrix h = comp.precision;
  h.diagonal() += rate;
  Eigen::LLT<Matrix> llt(h);
  if (llt.info() != Eigen::Success) throw InvalidParameter("fixed-point S system is not positive definite");
  return symmetrize(llt.solve(Matrix::Identity(h.rows(), h.cols())));
}

Matrix update_S(const VariationalSite& site, const Component& comp) {
  require_spd(site.S, "variational covariance S");
  return update_S(site, prepare(comp));
}

Vector update_m(const VariationalSite& site, const Matrix& S_new, const PreparedComponent& comp,
                const Eigen::Ref<const Vector>& y) {
  const Vector rate = (site.m.array() + 0.5 * S_new.diagonal().array()).exp().matrix();
  const Vector bracket = rate + comp.precision * (site.m - comp.mu) - y;
  return site.m - S_new * bracket;
}

Vector update_m(const VariationalSite& site, const Matrix& S_new, const Component& comp,
                const Eigen::Ref<const Vector>& y) {
  require_spd(S_new, "updated variational covariance");
  return update_m(site, S_new, prepare(comp), y);
}

Vector m_gradient_residual(const VariationalSite& site, const PreparedComponent& comp,
                           const Eigen::Ref<const Vector>& y) {
  const Vector rate = (site.m.array() + 0.5 * site.S.diagonal().array()).exp().matrix();
  return rate + comp.precision * (site.m - comp.mu) - y;
}

InnerResult inner_optimize(const Eigen::Ref<const Vector>& y, const PreparedComponent& comp,
                           const VariationalSite& init, const InnerOptions& options, double log_factorial) {
  check_dims(y, init, comp);
  if (log_factorial < 0.0) log_factorial = sum_log_factorial(y);
  const Eigen::Index d = comp.mu.size();

  Vector m = init.m;
  Matrix S = symmetrize(init.S);
  Eigen::LLT<Matrix> llt(S);
  if (llt.info() != Eigen::Success) throw InvalidParameter("initial variational covariance is not SPD");
  double log_det_S = log_det_llt(llt);

  InnerResult out;
  Matrix h(d, d), s_fixed(d, d), s_cand(d, d);
  Vector rate(d), step(d), m_cand(d);
  const Matrix identity = Matrix::Identity(d, d);

  for (int it = 1; it <= options.max_iter; ++it) {
    out.iterations = it;
    bool moved = false;

    // Fixed-point S step, halved toward the current S until the ELBO does not drop.
    rate = (m.array() + 0.5 * S.diagonal().array()).exp().matrix();
    h = comp.precision;
    h.diagonal() += rate;
    llt.compute(h);
    double ds = 0.0;
    if (llt.info() == Eigen::Success) {
      s_fixed = symmetrize(llt.solve(identity));
      s_cand = s_fixed;
      double log_det_cand = -log_det_llt(llt);
      double t = 1.0;
      for (int half = 0; half <= options.max_halvings; ++half) {
        const double delta = elbo_delta(y, comp, m, S, log_det_S, m, s_cand, log_det_cand);
        if (std::isfinite(delta) && delta >= -kAcceptSlack) {
          ds = (s_cand.diagonal() - S.diagonal()).cwiseAbs().maxCoeff();
          S = s_cand;
          log_det_S = log_det_cand;
          moved = true;
          break;
        }
        t *= 0.5;
        s_cand = S + t * (s_fixed - S);
        llt.compute(s_cand);
        if (llt.info() != Eigen::Success) break;
        log_det_cand = log_det_llt(llt);
      }
    }

    // Newton m step with backtracking.
    rate = (m.array() + 0.5 * S.diagonal().array()).exp().matrix();
    step = S * (rate + comp.precision * (m - comp.mu) - y);
    double dm = 0.0;
    double t = 1.0;
    for (int half = 0; half <= options.max_halvings; ++half) {
      m_cand = m - t * step;
      const double delta = elbo_delta(y, comp, m, S, log_det_S, m_cand, S, log_det_S);
      if (std::isfinite(delta) && delta >= -kAcceptSlack) {
        dm = (m_cand - m).cwiseAbs().maxCoeff();
        m = m_cand;
        moved = true;
        break;
      }
      t *= 0.5;
    }

    rate = (m.array() + 0.5 * S.diagonal().array()).exp().matrix();
    const double residual = (rate + comp.precision * (m - comp.mu) - y).cwiseAbs().maxCoeff();
    if (std::max(dm, ds) < options.tol && residual < options.gradient_tol) {
      out.converged = true;
      break;
    }
    if (!moved) break;
  }

  llt.compute(S);
  out.elbo = elbo_value(y, m, S, log_det_llt(llt), comp, log_factorial);
  out.site = {std::move(m), std::move(S)};
  return out;
}

InnerResult inner_optimize(const Eigen::Ref<const Vector>& y, const Component& comp, const VariationalSite& init,
                           const InnerOptions& options) {
  require_spd(init.S, "initial variational covariance");
  return inner_optimize(y, prepare(comp), init, options);
}

Matrix responsibilities_from_elbo(const Matrix& elbo, const Vector& weights) {
  const Eigen::Index n = elbo.rows();
  const Eigen::Index G = elbo.cols();
  if (weights.size() != G) throw InvalidParameter("weights do not match ELBO columns");
  const Vector log_w = weights.array().log().matrix();
  Matrix resp(n, G);
  for (Eigen::Index i = 0; i < n; ++i) {
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index g = 0; g < G; ++g) top = std::max(top, log_w(g) + elbo(i, g));
    if (!std::isfinite(top)) {
      throw DegenerateObservation(static_cast<std::size_t>(i),
                                  "observation " + std::to_string(i + 1) + " has no finite component ELBO");
    }
    double total = 0.0;
    for (Eigen::Index g = 0; g < G; ++g) {
      resp(i, g) = std::exp(log_w(g) + elbo(i, g) - top);
      total += resp(i, g);
    }
    resp.row(i) /= total;
  }
  return resp;
}

double mixture_loglik(const Matrix& elbo, const Vector& weights) {
  const Vector log_w = weights.array().log().matrix();
  double total = 0.0;
  for (Eigen::Index i = 0; i < elbo.rows(); ++i) {
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index g = 0; g < elbo.cols(); ++g) top = std::max(top, log_w(g) + elbo(i, g));
    if (!std::isfinite(top)) return top;
    double s = 0.0;
    for (Eigen::Index g = 0; g < elbo.cols(); ++g) s += std::exp(log_w(g) + elbo(i, g) - top);
    total += top + std::log(s);
  }
  return total;
}

Matrix elbo_matrix(const CountMatrix& Y, const MixtureParams& params, const VariationalState& state) {
  const int G = params.num_components();
  if (state.rows() != Y.rows() || state.components() != G) {
    throw InvalidParameter("variational state does not match data and parameters");
  }
  std::vector<PreparedComponent> prepared;
  prepared.reserve(G);
  for (const auto& c : params.components) prepared.push_back(prepare(c));
  Matrix f(Y.rows(), G);
  const Eigen::Index d = static_cast<Eigen::Index>(Y.cols());
  Eigen::LLT<Matrix> llt(d);
  for (std::size_t i = 0; i < Y.rows(); ++i) {
    for (int g = 0; g < G; ++g) {
      const VariationalSite& site = state.site(i, g);
      llt.compute(site.S);
      f(i, g) = llt.info() == Eigen::Success
                    ? elbo_value(Y.row(i), site.m, site.S, log_det_llt(llt), prepared[g], Y.row_log_factorial(i))
                    : -std::numeric_limits<double>::infinity();
    }
  }
  return f;
}

Matrix responsibilities(const CountMatrix& Y, const MixtureParams& params, const VariationalState& state) {
  return responsibilities_from_elbo(elbo_matrix(Y, params, state), params.weights);
}

}  // namespace mplnmix
