#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mplnmix/covariance.hpp"
#include "mplnmix/model.hpp"
#include "mplnmix/variational.hpp"

namespace mplnmix {

struct FitConfig {
  std::vector<int> g_values{1};
  std::vector<CovarianceModel> models{kAllModels.begin(), kAllModels.end()};
  double epsilon = 0.001;
  int max_outer = 500;
  double inner_tol = 1e-6;
  int inner_max_iter = 50;
  int small_em_starts = 20;
  int small_em_iters = 20;
  std::uint64_t seed = 0;
  int threads = 1;  ///< worker count; results do not depend on it

  /// Throws InvalidInput on an unusable configuration.
  void validate() const;
};

/// Starting point for an EM run: parameters plus warm variational sites.
struct Initialization {
  MixtureParams params;
  VariationalState state;
  double loglik = 0.0;
};

struct FitResult {
  MixtureParams params;
  ConstrainedCovariance covariance;
  /// Sites after the last variational step and the responsibilities that fed
  /// the last M-step, so params.weights equals the column means of resp.
  VariationalState state;
  std::vector<int> labels;
  /// Entry 0 is the log-likelihood at the starting point, entry t the value
  /// after outer iteration t.
  std::vector<double> elbo_trace;
  double loglik = 0.0;
  double bic = 0.0;
  bool converged = false;
  int iterations = 0;
  /// Site updates that hit the inner iteration cap, summed over iterations.
  std::size_t inner_nonconverged = 0;
};

struct FitOptions {
  double epsilon = 0.001;
  int max_outer = 500;
  InnerOptions inner{};
  int threads = 1;
};

FitOptions fit_options(const FitConfig& config);

struct MStepResult {
  MixtureParams params;
  ConstrainedCovariance covariance;
};

/// pi, mu and constrained sigma from the responsibilities and sites in `state`.
/// Throws ComponentCollapse when a component's effective size is below 1e-10 n.
MStepResult m_step(const CountMatrix& Y, CovarianceModel model, const VariationalState& state,
                   const ConstrainedCovariance* warm = nullptr);

/// Hard-partition start: sites at their fresh initialization, one-hot
/// responsibilities, and parameters from one M-step under `model`.
Initialization init_from_partition(const CountMatrix& Y, const std::vector<int>& labels, int G,
                                   CovarianceModel model = CovarianceModel::EII);

/// Best of `config.small_em_starts` short EII runs from random partitions.
/// Deterministic in (Y, G, config.seed).
Initialization small_em_init(const CountMatrix& Y, int G, const FitConfig& config);

/// Variational EM from `init` until the Aitken criterion fires or max_outer.
FitResult fit(const CountMatrix& Y, CovarianceModel model, const Initialization& init, const FitOptions& options = {});

struct AitkenDecision {
  bool stop = false;
  bool fallback = false;
  std::optional<double> asymptote;  ///< empty on the fallback path
};

/// One Aitken step on three consecutive log-likelihoods. `prev_asymptote` is
/// the asymptote returned by the previous call, if any.
AitkenDecision aitken_stop(double l_prev2, double l_prev, double l_curr, double epsilon,
                           std::optional<double> prev_asymptote);

double bic(double loglik, int psi, std::size_t n);

/// argmax_g resp(i, g); ties go to the lowest index.
std::vector<int> hard_labels(const Matrix& resp);

struct GridCell {
  int G = 0;
  CovarianceModel model = CovarianceModel::EII;
  bool ok = false;
  std::string error;
  double bic = 0.0;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> elbo_trace;
  double seconds = 0.0;  ///< wall-clock time of the cell's fit
};

struct GridResult {
  FitResult best;
  std::size_t best_index = 0;
  /// |g_values| x |models| cells, G-major in config order.
  std::vector<GridCell> cells;
  /// Wall-clock time of the small-EM initialization for each G.
  std::vector<double> init_seconds;
};

/// Fits every (G, model) cell from one small-EM start per G and picks the
/// minimum BIC among successful cells. Cells that hit max_outer stay eligible
/// and keep converged = false.
GridResult grid_search(const CountMatrix& Y, const FitConfig& config);

}  // namespace mplnmix
