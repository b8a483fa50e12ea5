#include "mplnmix/datagen.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "mplnmix/errors.hpp"
#include "mplnmix/rng.hpp"

namespace mplnmix {

namespace {

int draw_component(const Vector& pi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0.0;
  for (Eigen::Index g = 0; g + 1 < pi.size(); ++g) {
    acc += pi(g);
    if (u < acc) return static_cast<int>(g);
  }
  return static_cast<int>(pi.size() - 1);
}

void check_weights(const Vector& pi, std::size_t G) {
  if (static_cast<std::size_t>(pi.size()) != G || G == 0) {
    throw InvalidParameter("mixing weights do not match the component count");
  }
  if ((pi.array() <= 0.0).any() || std::abs(pi.sum() - 1.0) > 1e-8) {
    throw InvalidParameter("mixing weights must be positive and sum to one");
  }
}

std::int64_t poisson_draw(double rate, std::mt19937_64& rng) {
  if (!(rate > 0.0)) return 0;
  std::poisson_distribution<std::int64_t> pois(rate);
  return pois(rng);
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) out(k++) = x;
  return out;
}

Matrix mat3(std::initializer_list<double> v) {
  Matrix out(3, 3);
  Eigen::Index k = 0;
  for (double x : v) {
    out(k / 3, k % 3) = x;
    ++k;
  }
  return out;
}

}  // namespace

LabeledCounts gen_mpln_mixture(const MixtureParams& params, std::size_t n, std::uint64_t seed,
                               std::uint64_t dataset) {
  validate(params);
  if (n == 0) throw InvalidInput("sample size must be positive");
  const int G = params.num_components();
  const Eigen::Index d = params.dim();
  std::vector<Matrix> chol;
  for (const auto& c : params.components) chol.push_back(Eigen::LLT<Matrix>(c.sigma).matrixL());

  std::vector<std::int64_t> values(n * d);
  std::vector<int> labels(n);
  Vector z(d);
  for (std::size_t i = 0; i < n; ++i) {
    std::mt19937_64 rng = stream_engine(seed, dataset, i);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int g = G == 1 ? 0 : draw_component(params.weights, rng);
    labels[i] = g;
    for (Eigen::Index j = 0; j < d; ++j) z(j) = normal(rng);
    const Vector theta = params.components[g].mu + chol[g] * z;
    for (Eigen::Index j = 0; j < d; ++j) values[i * d + j] = poisson_draw(std::exp(theta(j)), rng);
  }
  return {CountMatrix(n, static_cast<std::size_t>(d), std::move(values)), std::move(labels)};
}

double nb_size(double mean, double variance) {
  if (!(mean > 0.0) || !(variance > mean)) {
    throw InvalidParameter("negative binomial requires variance > mean > 0");
  }
  return mean * mean / (variance - mean);
}

LabeledCounts gen_nb_mixture(const std::vector<Vector>& means, const std::vector<Vector>& variances,
                             const Vector& pi, std::size_t n, std::uint64_t seed, std::uint64_t dataset) {
  check_weights(pi, means.size());
  if (variances.size() != means.size()) throw InvalidParameter("means and variances differ in length");
  if (n == 0) throw InvalidInput("sample size must be positive");
  const Eigen::Index d = means.front().size();
  std::vector<Vector> sizes;
  for (std::size_t g = 0; g < means.size(); ++g) {
    if (means[g].size() != d || variances[g].size() != d) throw InvalidParameter("dimension mismatch");
    Vector s(d);
    for (Eigen::Index j = 0; j < d; ++j) s(j) = nb_size(means[g](j), variances[g](j));
    sizes.push_back(std::move(s));
  }
  std::vector<std::int64_t> values(n * d);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::mt19937_64 rng = stream_engine(seed, dataset, i);
    const int g = means.size() == 1 ? 0 : draw_component(pi, rng);
    labels[i] = g;
    for (Eigen::Index j = 0; j < d; ++j) {
      std::gamma_distribution<double> gamma(sizes[g](j), means[g](j) / sizes[g](j));
      values[i * d + j] = poisson_draw(gamma(rng), rng);
    }
  }
  return {CountMatrix(n, static_cast<std::size_t>(d), std::move(values)), std::move(labels)};
}

LabeledCounts gen_poisson_mixture(const std::vector<Vector>& means, const Vector& pi, std::size_t n,
                                  std::uint64_t seed, std::uint64_t dataset) {
  check_weights(pi, means.size());
  if (n == 0) throw InvalidInput("sample size must be positive");
  const Eigen::Index d = means.front().size();
  for (const auto& m : means) {
    if (m.size() != d) throw InvalidParameter("dimension mismatch");
    if ((m.array() <= 0.0).any()) throw InvalidParameter("Poisson means must be positive");
  }
  std::vector<std::int64_t> values(n * d);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::mt19937_64 rng = stream_engine(seed, dataset, i);
    const int g = means.size() == 1 ? 0 : draw_component(pi, rng);
    labels[i] = g;
    for (Eigen::Index j = 0; j < d; ++j) values[i * d + j] = poisson_draw(means[g](j), rng);
  }
  return {CountMatrix(n, static_cast<std::size_t>(d), std::move(values)), std::move(labels)};
}

std::string_view to_string(Family family) {
  switch (family) {
    case Family::MPLN: return "mpln";
    case Family::NegativeBinomial: return "negative_binomial";
    case Family::Poisson: return "poisson";
  }
  return "?";
}

SimulationPreset preset(std::string_view name) {
  SimulationPreset p;
  p.name = std::string(name);
  if (name == "sim1") {
    p.family = Family::MPLN;
    p.n = 2000;
    p.d = 3;
    p.pi = vec({0.2, 0.5, 0.3});
    const Matrix shared = mat3({0.30, 0.15, 0.20, 0.15, 0.40, 0.30, 0.20, 0.30, 0.40});
    const Matrix third = mat3({0.20, -0.15, -0.10, -0.15, 0.40, -0.10, -0.10, -0.10, 0.20});
    p.mpln.model = CovarianceModel::VVV;
    p.mpln.weights = p.pi;
    p.mpln.components = {{vec({6, 3, 3}), shared}, {vec({3, 5, 3}), shared}, {vec({5, 3, 5}), third}};
  } else if (name == "sim2") {
    p.family = Family::MPLN;
    p.n = 500;
    p.d = 6;
    p.pi = vec({0.59, 0.41});
    p.mpln.model = CovarianceModel::EII;
    p.mpln.weights = p.pi;
    p.mpln.components = {{vec({5, 6, 5, 5, 5, 6}), Matrix::Identity(6, 6)},
                         {vec({2.5, 3, 2.5, 3, 3, 2.5}), Matrix::Identity(6, 6)}};
  } else if (name == "sim3") {
    p.family = Family::NegativeBinomial;
    p.n = 2000;
    p.d = 6;
    p.pi = vec({0.79, 0.21});
    p.means = {vec({1000, 500, 1000, 500, 1000, 500}), vec({500, 1000, 500, 1000, 500, 500})};
    p.variances = {vec({11000, 3000, 11000, 3000, 11000, 3000}), vec({3000, 11000, 3000, 11000, 3000, 3000})};
  } else if (name == "sim4") {
    p.family = Family::Poisson;
    p.n = 1000;
    p.d = 4;
    p.pi = vec({0.59, 0.41});
    p.means = {vec({1000, 1500, 1500, 1000}), vec({1000, 1000, 1000, 1500})};
  } else {
    throw InvalidInput("unknown simulation preset '" + std::string(name) + "'");
  }
  return p;
}

std::vector<std::string> preset_names() { return {"sim1", "sim2", "sim3", "sim4"}; }

std::uint64_t preset_checksum(const SimulationPreset& p) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](double x) {
    char buf[40];
    const int len = std::snprintf(buf, sizeof buf, "%.17g;", x);
    for (int k = 0; k < len; ++k) {
      h ^= static_cast<unsigned char>(buf[k]);
      h *= 0x100000001b3ULL;
    }
  };
  auto feed_vec = [&](const Vector& v) {
    for (Eigen::Index k = 0; k < v.size(); ++k) feed(v(k));
  };
  feed(static_cast<double>(p.n));
  feed(static_cast<double>(p.d));
  feed_vec(p.pi);
  for (const auto& c : p.mpln.components) {
    feed_vec(c.mu);
    for (Eigen::Index k = 0; k < c.sigma.size(); ++k) feed(c.sigma(k));
  }
  for (const auto& m : p.means) feed_vec(m);
  for (const auto& v : p.variances) feed_vec(v);
  return h;
}

std::vector<Vector> preset_count_means(const SimulationPreset& p) {
  if (p.family != Family::MPLN) return p.means;
  std::vector<Vector> out;
  for (const auto& c : p.mpln.components) out.push_back(mpln_moments(c.mu, c.sigma).mean);
  return out;
}

std::vector<Vector> preset_count_variances(const SimulationPreset& p) {
  switch (p.family) {
    case Family::NegativeBinomial: return p.variances;
    case Family::Poisson: return p.means;
    case Family::MPLN: break;
  }
  std::vector<Vector> out;
  for (const auto& c : p.mpln.components) out.push_back(mpln_moments(c.mu, c.sigma).cov.diagonal());
  return out;
}

LabeledCounts simulate(const SimulationPreset& p, std::uint64_t seed, std::uint64_t dataset,
                       std::optional<std::size_t> n) {
  const std::size_t size = n.value_or(p.n);
  switch (p.family) {
    case Family::MPLN: return gen_mpln_mixture(p.mpln, size, seed, dataset);
    case Family::NegativeBinomial: return gen_nb_mixture(p.means, p.variances, p.pi, size, seed, dataset);
    case Family::Poisson: return gen_poisson_mixture(p.means, p.pi, size, seed, dataset);
  }
  throw InvalidInput("unknown family");
}

}  // namespace mplnmix
