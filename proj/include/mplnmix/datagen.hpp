#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mplnmix/model.hpp"

namespace mplnmix {

/// Simulated counts with the generating component of each row (0-based).
struct LabeledCounts {
  CountMatrix counts;
  std::vector<int> labels;
};

/// Every generator draws observation i from the stream keyed by
/// (seed, dataset, i): the same key always yields the same row, and
/// distinct datasets are independent.

/// z ~ Categorical(pi), theta ~ N(mu_z, sigma_z), y_j ~ Poisson(exp(theta_j)).
LabeledCounts gen_mpln_mixture(const MixtureParams& params, std::size_t n, std::uint64_t seed,
                               std::uint64_t dataset = 0);

/// Independent negative binomial coordinates parameterized by mean and
/// variance; size = mean^2 / (variance - mean). Requires variance > mean.
LabeledCounts gen_nb_mixture(const std::vector<Vector>& means, const std::vector<Vector>& variances,
                             const Vector& pi, std::size_t n, std::uint64_t seed, std::uint64_t dataset = 0);

/// Independent Poisson coordinates.
LabeledCounts gen_poisson_mixture(const std::vector<Vector>& means, const Vector& pi, std::size_t n,
                                  std::uint64_t seed, std::uint64_t dataset = 0);

/// Negative binomial size (the gamma shape) for a mean/variance pair.
double nb_size(double mean, double variance);

enum class Family { MPLN, NegativeBinomial, Poisson };

std::string_view to_string(Family family);

struct SimulationPreset {
  std::string name;
  Family family = Family::MPLN;
  std::size_t n = 0;
  int d = 0;
  Vector pi;
  MixtureParams mpln;               ///< Family::MPLN
  std::vector<Vector> means;        ///< NegativeBinomial and Poisson
  std::vector<Vector> variances;    ///< NegativeBinomial
};

/// "sim1" ... "sim4"; throws InvalidInput for anything else.
SimulationPreset preset(std::string_view name);
std::vector<std::string> preset_names();

/// FNV-1a over the preset's numeric constants, printed at full precision.
std::uint64_t preset_checksum(const SimulationPreset& p);

/// Observed-count mean and variance per component implied by a preset
/// (MPLN moments for sim1/sim2, the stated targets otherwise).
std::vector<Vector> preset_count_means(const SimulationPreset& p);
std::vector<Vector> preset_count_variances(const SimulationPreset& p);

LabeledCounts simulate(const SimulationPreset& p, std::uint64_t seed, std::uint64_t dataset,
                       std::optional<std::size_t> n = std::nullopt);

}  // namespace mplnmix
