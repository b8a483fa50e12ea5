#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mplnmix/linalg.hpp"

namespace mplnmix {

/// n x d matrix of non-negative integer observations, one row per observation.
///
/// Counts are kept both as integers (for bit-exact I/O) and as doubles in
/// row-major order so a row can be mapped as a contiguous vector. The sum of
/// log(y_ij!) over each row is cached because every ELBO evaluation needs it.
class CountMatrix {
 public:
  CountMatrix() = default;
  CountMatrix(std::size_t n, std::size_t d, std::vector<std::int64_t> values);
  static CountMatrix from_rows(const std::vector<std::vector<std::int64_t>>& rows);

  std::size_t rows() const noexcept { return n_; }
  std::size_t cols() const noexcept { return d_; }

  std::int64_t operator()(std::size_t i, std::size_t j) const { return counts_[i * d_ + j]; }
  Eigen::Map<const Vector> row(std::size_t i) const {
    return {real_.data() + i * d_, static_cast<Eigen::Index>(d_)};
  }
  double row_log_factorial(std::size_t i) const { return log_factorial_[i]; }
  std::span<const std::int64_t> values() const noexcept { return counts_; }

  /// Rows reordered so that new row k is old row order[k].
  CountMatrix permuted(std::span<const std::size_t> order) const;

 private:
  std::size_t n_ = 0;
  std::size_t d_ = 0;
  std::vector<std::int64_t> counts_;
  std::vector<double> real_;
  std::vector<double> log_factorial_;
};

/// Latent Gaussian of one mixture component: theta ~ N(mu, sigma).
struct Component {
  Vector mu;
  Matrix sigma;
};

/// The eight eigen-decomposition constraint classes, in canonical order.
enum class CovarianceModel { EII, VII, EEI, VVI, EEE, VVE, EEV, VVV };

inline constexpr std::array<CovarianceModel, 8> kAllModels = {
    CovarianceModel::EII, CovarianceModel::VII, CovarianceModel::EEI, CovarianceModel::VVI,
    CovarianceModel::EEE, CovarianceModel::VVE, CovarianceModel::EEV, CovarianceModel::VVV};

std::string_view to_string(CovarianceModel model);
std::optional<CovarianceModel> parse_covariance_model(std::string_view label);

/// True for the four axis-aligned models (EII, VII, EEI, VVI).
bool is_diagonal(CovarianceModel model);

struct MixtureParams {
  Vector weights;
  std::vector<Component> components;
  CovarianceModel model = CovarianceModel::VVV;

  int num_components() const { return static_cast<int>(components.size()); }
  int dim() const { return components.empty() ? 0 : static_cast<int>(components.front().mu.size()); }
};

/// Checks weights positive and summing to one, consistent dimensions and
/// SPD covariances. Throws InvalidParameter.
void validate(const MixtureParams& params);

struct CountMoments {
  Vector mean;
  Matrix cov;
};

/// Mean and covariance of the observed counts implied by an MPLN(mu, sigma).
CountMoments mpln_moments(const Vector& mu, const Matrix& sigma);

/// y*theta - exp(theta) - log(y!).
double log_poisson_term(std::int64_t y, double theta);

struct ParamCount {
  int cov_params = 0;
  int total = 0;
};

/// Free parameters of a G-component model in dimension d. The total adds
/// G-1 mixing weights and G*d means; variational parameters are not counted.
ParamCount count_free_params(CovarianceModel model, int d, int G);

}  // namespace mplnmix
