#include "mplnmix/model.hpp"

#include <cmath>
#include <string>

#include "mplnmix/errors.hpp"

namespace mplnmix {

bool is_spd(const Matrix& a) {
  if (a.rows() == 0 || a.rows() != a.cols()) return false;
  if (!a.allFinite()) return false;
  const double scale = a.cwiseAbs().maxCoeff();
  if (!(scale > 0.0)) return false;
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) return false;
  Eigen::LLT<Matrix> llt(symmetrize(a));
  if (llt.info() != Eigen::Success) return false;
  const double max_diag = a.diagonal().maxCoeff();
  const Matrix& l = llt.matrixLLT();
  for (Eigen::Index j = 0; j < a.rows(); ++j) {
    if (!(l(j, j) * l(j, j) > 1e-10 * max_diag)) return false;
  }
  return true;
}

void require_spd(const Matrix& a, const char* what) {
  if (!is_spd(a)) {
    throw InvalidParameter(std::string(what) + " is not symmetric positive definite");
  }
}

SpdInverse spd_inverse(const Matrix& a, const char* what) {
  require_spd(a, what);
  Eigen::LLT<Matrix> llt(symmetrize(a));
  SpdInverse out;
  out.inverse = symmetrize(llt.solve(Matrix::Identity(a.rows(), a.cols())));
  out.log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return out;
}

CountMatrix::CountMatrix(std::size_t n, std::size_t d, std::vector<std::int64_t> values)
    : n_(n), d_(d), counts_(std::move(values)) {
  if (n_ == 0 || d_ == 0) throw InvalidInput("count matrix must have n >= 1 and d >= 1");
  if (counts_.size() != n_ * d_) throw InvalidInput("count matrix size does not equal n*d");
  real_.resize(counts_.size());
  log_factorial_.assign(n_, 0.0);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < d_; ++j) {
      const std::int64_t y = counts_[i * d_ + j];
      if (y < 0) {
        throw InvalidInput("negative count at row " + std::to_string(i + 1) + ", column " +
                           std::to_string(j + 1));
      }
      real_[i * d_ + j] = static_cast<double>(y);
      log_factorial_[i] += std::lgamma(static_cast<double>(y) + 1.0);
    }
  }
}

CountMatrix CountMatrix::from_rows(const std::vector<std::vector<std::int64_t>>& rows) {
  if (rows.empty()) throw InvalidInput("count matrix must have at least one row");
  const std::size_t d = rows.front().size();
  std::vector<std::int64_t> flat;
  flat.reserve(rows.size() * d);
  for (const auto& r : rows) {
    if (r.size() != d) throw InvalidInput("ragged rows in count matrix");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return CountMatrix(rows.size(), d, std::move(flat));
}

CountMatrix CountMatrix::permuted(std::span<const std::size_t> order) const {
  if (order.size() != n_) throw InvalidInput("permutation length does not match rows");
  std::vector<std::int64_t> flat;
  flat.reserve(counts_.size());
  for (std::size_t k : order) {
    flat.insert(flat.end(), counts_.begin() + k * d_, counts_.begin() + (k + 1) * d_);
  }
  return CountMatrix(n_, d_, std::move(flat));
}

std::string_view to_string(CovarianceModel model) {
  switch (model) {
    case CovarianceModel::EII: return "EII";
    case CovarianceModel::VII: return "VII";
    case CovarianceModel::EEI: return "EEI";
    case CovarianceModel::VVI: return "VVI";
    case CovarianceModel::EEE: return "EEE";
    case CovarianceModel::VVE: return "VVE";
    case CovarianceModel::EEV: return "EEV";
    case CovarianceModel::VVV: return "VVV";
  }
  return "?";
}

std::optional<CovarianceModel> parse_covariance_model(std::string_view label) {
  for (CovarianceModel m : kAllModels) {
    if (to_string(m) == label) return m;
  }
  return std::nullopt;
}

bool is_diagonal(CovarianceModel model) {
  switch (model) {
    case CovarianceModel::EII:
    case CovarianceModel::VII:
    case CovarianceModel::EEI:
    case CovarianceModel::VVI:
      return true;
    default:
      return false;
  }
}

void validate(const MixtureParams& params) {
  const int G = params.num_components();
  if (G < 1) throw InvalidParameter("mixture needs at least one component");
  if (params.weights.size() != G) throw InvalidParameter("weight count does not match components");
  if ((params.weights.array() <= 0.0).any()) throw InvalidParameter("mixing weights must be positive");
  if (std::abs(params.weights.sum() - 1.0) > 1e-8) {
    throw InvalidParameter("mixing weights must sum to one");
  }
  const Eigen::Index d = params.components.front().mu.size();
  if (d < 1) throw InvalidParameter("component dimension must be at least one");
  for (const auto& c : params.components) {
    if (c.mu.size() != d || c.sigma.rows() != d || c.sigma.cols() != d) {
      throw InvalidParameter("components disagree on dimension");
    }
    require_spd(c.sigma, "component covariance");
  }
}

CountMoments mpln_moments(const Vector& mu, const Matrix& sigma) {
  if (sigma.rows() != mu.size()) throw InvalidParameter("mu and sigma dimensions differ");
  require_spd(sigma, "sigma");
  const Eigen::Index d = mu.size();
  CountMoments out;
  out.mean = (mu.array() + 0.5 * sigma.diagonal().array()).exp().matrix();
  out.cov.resize(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index k = 0; k < d; ++k) {
      out.cov(j, k) = out.mean(j) * out.mean(k) * std::expm1(sigma(j, k));
    }
    out.cov(j, j) += out.mean(j);
  }
  return out;
}

double log_poisson_term(std::int64_t y, double theta) {
  if (y < 0) throw InvalidInput("count must be non-negative");
  const double yd = static_cast<double>(y);
  return yd * theta - std::exp(theta) - std::lgamma(yd + 1.0);
}

ParamCount count_free_params(CovarianceModel model, int d, int G) {
  const int full = d * (d + 1) / 2;
  int cov = 0;
  switch (model) {
    case CovarianceModel::EII: cov = 1; break;
    case CovarianceModel::VII: cov = G; break;
    case CovarianceModel::EEI: cov = d; break;
    case CovarianceModel::VVI: cov = d * G; break;
    case CovarianceModel::EEE: cov = full; break;
    case CovarianceModel::VVE: cov = full + (G - 1) * d; break;
    case CovarianceModel::EEV: cov = G * full - (G - 1) * d; break;
    case CovarianceModel::VVV: cov = G * full; break;
  }
  return {cov, cov + (G - 1) + G * d};
}

}  // namespace mplnmix
