#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mplnmix/engine.hpp"

namespace mplnmix {

/// Co-occurrence counts between two labelings. Row and column labels appear
/// in first-appearance order of their respective labelings.
struct Contingency {
  std::vector<int> row_labels;
  std::vector<int> col_labels;
  std::vector<std::vector<std::int64_t>> counts;

  std::int64_t total() const;
  Contingency transposed() const;
};

Contingency confusion(std::span<const int> labels_pred, std::span<const int> labels_true);

/// Adjusted Rand index. Both labelings single-class (0/0) is defined as 1.
/// Throws InvalidInput on length mismatch or n < 2.
double ari(std::span<const int> labels_a, std::span<const int> labels_b);

/// Row -> column assignment maximizing the summed profit (square input).
std::vector<int> hungarian_max(const Matrix& profit);

struct ComponentRecovery {
  double weight_mean = 0.0;
  double weight_se = 0.0;
  Vector mu_mean, mu_se;
  Matrix sigma_mean, sigma_se;
  /// Observed-count moments implied by the fitted MPLN component.
  Vector count_mean_mean, count_mean_se;
  Vector count_var_mean, count_var_se;
};

/// Per-parameter averages and standard errors (standard deviation across
/// fits) after aligning each fit's components to the true classes.
struct RecoverySummary {
  int G = 0;
  std::size_t included = 0;
  std::vector<std::string> notes;
  std::vector<ComponentRecovery> components;  ///< indexed by true class
};

/// `true_labels[k]` are the generating classes (0..true_G-1) for fits[k].
/// Fits with a different component count are skipped with a note. Each fit is
/// aligned by the Hungarian assignment maximizing the matched confusion trace.
RecoverySummary recovery_summary(std::span<const FitResult> fits, std::span<const std::vector<int>> true_labels,
                                 int true_G);

/// fitted component index to true class, for one fit.
std::vector<int> align_components(std::span<const int> fitted, std::span<const int> truth, int G);

}  // namespace mplnmix
