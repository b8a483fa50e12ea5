#include "mplnmix/engine.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include "mplnmix/errors.hpp"
#include "mplnmix/parallel.hpp"
#include "mplnmix/rng.hpp"

namespace mplnmix {

namespace {

// Random stream reserved for small-EM partitions (datagen uses others).
constexpr std::uint64_t kPartitionStream = 0x5e11u;

struct EmState {
  MixtureParams params;
  ConstrainedCovariance covariance;
  bool has_covariance = false;
  VariationalState state;
  Matrix elbo;
  double loglik = 0.0;
  std::size_t inner_nonconverged = 0;
};

void refresh_elbo(const CountMatrix& Y, EmState& s) {
  s.elbo = elbo_matrix(Y, s.params, s.state);
  s.loglik = mixture_loglik(s.elbo, s.params.weights);
}

void apply_m_step(const CountMatrix& Y, CovarianceModel model, EmState& s) {
  MStepResult r = m_step(Y, model, s.state, s.has_covariance ? &s.covariance : nullptr);
  s.params = std::move(r.params);
  s.covariance = std::move(r.covariance);
  s.has_covariance = true;
}

// Responsibilities, then variational sites, then parameters.
void em_iteration(const CountMatrix& Y, CovarianceModel model, EmState& s, const FitOptions& options,
                  int iteration) {
  s.state.resp() = responsibilities_from_elbo(s.elbo, s.params.weights);

  const int G = s.params.num_components();
  std::vector<PreparedComponent> prepared;
  prepared.reserve(G);
  for (const auto& c : s.params.components) prepared.push_back(prepare(c));

  const std::size_t n = Y.rows();
  std::vector<unsigned char> stalled(n * G, 0);
  parallel_for(n, options.threads, [&](std::size_t i) {
    for (int g = 0; g < G; ++g) {
      VariationalSite& site = s.state.site(i, g);
      InnerResult r = inner_optimize(Y.row(i), prepared[g], site, options.inner, Y.row_log_factorial(i));
      site = std::move(r.site);
      stalled[i * G + g] = r.converged ? 0 : 1;
    }
  });
  for (unsigned char v : stalled) s.inner_nonconverged += v;

  apply_m_step(Y, model, s);
  refresh_elbo(Y, s);
  if (!std::isfinite(s.loglik)) {
    throw NumericalFailure(iteration, "non-finite ELBO at outer iteration " + std::to_string(iteration));
  }
}

std::vector<int> random_partition(std::size_t n, int G, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, G - 1);
  std::vector<int> labels(n);
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::vector<std::size_t> counts(G, 0);
    for (auto& l : labels) {
      l = pick(rng);
      ++counts[l];
    }
    bool full = true;
    for (auto c : counts) full = full && c > 0;
    if (full) return labels;
  }
  throw InitializationError("could not draw a partition with " + std::to_string(G) +
                            " non-empty groups in 100 attempts");
}

}  // namespace

void FitConfig::validate() const {
  if (g_values.empty()) throw InvalidInput("g_values must not be empty");
  for (int g : g_values) {
    if (g < 1) throw InvalidInput("component counts must be positive");
  }
  if (models.empty()) throw InvalidInput("at least one covariance model is required");
  if (!(epsilon > 0.0)) throw InvalidInput("epsilon must be positive");
  if (max_outer < 1) throw InvalidInput("max_outer must be at least 1");
  if (!(inner_tol > 0.0)) throw InvalidInput("inner_tol must be positive");
  if (small_em_starts < 1) throw InvalidInput("small_em_starts must be at least 1");
  if (small_em_iters < 0) throw InvalidInput("small_em_iters must be non-negative");
}

FitOptions fit_options(const FitConfig& config) {
  FitOptions o;
  o.epsilon = config.epsilon;
  o.max_outer = config.max_outer;
  o.inner.tol = config.inner_tol;
  o.inner.max_iter = config.inner_max_iter;
  o.threads = config.threads;
  return o;
}

MStepResult m_step(const CountMatrix& Y, CovarianceModel model, const VariationalState& state,
                   const ConstrainedCovariance* warm) {
  const std::size_t n = Y.rows();
  const int G = state.components();
  const Eigen::Index d = static_cast<Eigen::Index>(Y.cols());
  const Matrix& resp = state.resp();

  MStepResult out;
  out.params.model = model;
  out.params.weights.resize(G);
  out.params.components.resize(G);
  std::vector<GroupScatter> scatters(G);
  for (int g = 0; g < G; ++g) {
    const double ng = resp.col(g).sum();
    if (!(ng >= 1e-10 * static_cast<double>(n))) {
      throw ComponentCollapse(g, "component " + std::to_string(g + 1) + " collapsed (effective size " +
                                     std::to_string(ng) + ")");
    }
    out.params.weights(g) = ng / static_cast<double>(n);
    Vector mu = Vector::Zero(d);
    for (std::size_t i = 0; i < n; ++i) mu += resp(i, g) * state.site(i, g).m;
    mu /= ng;
    scatters[g] = sample_cov(resp.col(g), state, g, mu);
    out.params.components[g].mu = std::move(mu);
  }
  out.covariance = mstep_cov(model, scatters, warm);
  for (int g = 0; g < G; ++g) out.params.components[g].sigma = out.covariance.sigmas[g];
  return out;
}

Initialization init_from_partition(const CountMatrix& Y, const std::vector<int>& labels, int G,
                                   CovarianceModel model) {
  const std::size_t n = Y.rows();
  if (labels.size() != n) throw InvalidInput("partition length does not match observations");
  Initialization init;
  init.state = VariationalState(n, G);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= G) throw InvalidInput("partition label out of range");
    const VariationalSite fresh = initial_site(Y.row(i));
    for (int g = 0; g < G; ++g) init.state.site(i, g) = fresh;
    init.state.resp()(i, labels[i]) = 1.0;
  }
  MStepResult r = m_step(Y, model, init.state);
  init.params = std::move(r.params);
  init.loglik = mixture_loglik(elbo_matrix(Y, init.params, init.state), init.params.weights);
  return init;
}

Initialization small_em_init(const CountMatrix& Y, int G, const FitConfig& config) {
  const std::size_t n = Y.rows();
  if (G < 1 || static_cast<std::size_t>(G) > n) {
    throw InvalidInput("small-EM needs 1 <= G <= n (G = " + std::to_string(G) + ")");
  }
  const FitOptions options = fit_options(config);
  FitOptions serial = options;
  serial.threads = 1;
  const int starts = G == 1 ? 1 : config.small_em_starts;

  std::vector<std::optional<EmState>> runs(starts);
  std::vector<std::string> failures(starts);
  parallel_for(static_cast<std::size_t>(starts), options.threads, [&](std::size_t s) {
    try {
      std::vector<int> labels(n, 0);
      if (G > 1) {
        std::mt19937_64 rng = stream_engine(config.seed, kPartitionStream ^ static_cast<std::uint64_t>(G), s);
        labels = random_partition(n, G, rng);
      }
      Initialization init = init_from_partition(Y, labels, G, CovarianceModel::EII);
      EmState st;
      st.params = std::move(init.params);
      st.state = std::move(init.state);
      refresh_elbo(Y, st);
      for (int it = 1; it <= config.small_em_iters; ++it) {
        em_iteration(Y, CovarianceModel::EII, st, serial, it);
      }
      runs[s] = std::move(st);
    } catch (const Error& e) {
      failures[s] = e.what();
    }
  });

  int best = -1;
  for (int s = 0; s < starts; ++s) {
    if (runs[s] && (best < 0 || runs[s]->loglik > runs[best]->loglik)) best = s;
  }
  if (best < 0) {
    std::ostringstream msg;
    msg << "small-EM initialization failed for G = " << G << ":";
    for (const auto& f : failures) msg << " [" << f << "]";
    throw InitializationError(msg.str());
  }
  Initialization out;
  out.params = std::move(runs[best]->params);
  out.state = std::move(runs[best]->state);
  out.loglik = runs[best]->loglik;
  return out;
}

FitResult fit(const CountMatrix& Y, CovarianceModel model, const Initialization& init, const FitOptions& options) {
  const int G = init.params.num_components();
  if (init.state.rows() != Y.rows() || init.state.components() != G ||
      init.params.dim() != static_cast<int>(Y.cols())) {
    throw InvalidInput("initialization dimensions do not match the data");
  }
  EmState s;
  s.params = init.params;
  s.state = init.state;
  refresh_elbo(Y, s);
  if (!std::isfinite(s.loglik)) throw NumericalFailure(0, "non-finite ELBO at the starting point");

  FitResult out;
  out.elbo_trace.push_back(s.loglik);
  std::optional<double> asymptote;
  for (int it = 1; it <= options.max_outer; ++it) {
    em_iteration(Y, model, s, options, it);
    out.elbo_trace.push_back(s.loglik);
    out.iterations = it;
    const std::size_t t = out.elbo_trace.size() - 1;
    if (t >= 2) {
      const AitkenDecision dec =
          aitken_stop(out.elbo_trace[t - 2], out.elbo_trace[t - 1], out.elbo_trace[t], options.epsilon, asymptote);
      asymptote = dec.asymptote;
      if (dec.stop) {
        out.converged = true;
        break;
      }
    }
  }
  out.loglik = s.loglik;
  out.labels = hard_labels(s.state.resp());
  out.params = std::move(s.params);
  out.covariance = std::move(s.covariance);
  out.state = std::move(s.state);
  out.inner_nonconverged = s.inner_nonconverged;
  out.bic = bic(out.loglik, count_free_params(model, static_cast<int>(Y.cols()), G).total, Y.rows());
  return out;
}

AitkenDecision aitken_stop(double l_prev2, double l_prev, double l_curr, double epsilon,
                           std::optional<double> prev_asymptote) {
  AitkenDecision out;
  const double denom = l_prev - l_prev2;
  const double a = std::abs(denom) < 1e-12 ? 0.0 : (l_curr - l_prev) / denom;
  if (std::abs(denom) < 1e-12 || a >= 1.0) {
    out.fallback = true;
    out.stop = (l_curr - l_prev) < epsilon;
    return out;
  }
  const double asym = l_prev + (l_curr - l_prev) / (1.0 - a);
  out.asymptote = asym;
  if (prev_asymptote) {
    const double change = asym - *prev_asymptote;
    out.stop = change >= 0.0 && change < epsilon;
  }
  return out;
}

double bic(double loglik, int psi, std::size_t n) {
  return -2.0 * loglik + static_cast<double>(psi) * std::log(static_cast<double>(n));
}

std::vector<int> hard_labels(const Matrix& resp) {
  std::vector<int> labels(resp.rows(), 0);
  for (Eigen::Index i = 0; i < resp.rows(); ++i) {
    int best = 0;
    for (Eigen::Index g = 1; g < resp.cols(); ++g) {
      if (resp(i, g) > resp(i, best)) best = static_cast<int>(g);
    }
    labels[i] = best;
  }
  return labels;
}

GridResult grid_search(const CountMatrix& Y, const FitConfig& config) {
  config.validate();
  const FitOptions options = fit_options(config);
  FitOptions serial = options;
  serial.threads = 1;

  const std::size_t ng = config.g_values.size();
  const std::size_t nm = config.models.size();
  std::vector<std::optional<Initialization>> inits(ng);
  std::vector<std::string> init_errors(ng);
  GridResult out;
  out.init_seconds.assign(ng, 0.0);
  for (std::size_t k = 0; k < ng; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      inits[k] = small_em_init(Y, config.g_values[k], config);
    } catch (const Error& e) {
      init_errors[k] = e.what();
    }
    out.init_seconds[k] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  out.cells.resize(ng * nm);
  std::vector<std::optional<FitResult>> fits(ng * nm);
  parallel_for(ng * nm, options.threads, [&](std::size_t c) {
    const std::size_t k = c / nm;
    GridCell& cell = out.cells[c];
    cell.G = config.g_values[k];
    cell.model = config.models[c % nm];
    if (!inits[k]) {
      cell.error = init_errors[k];
      return;
    }
    const auto t0 = std::chrono::steady_clock::now();
    try {
      FitResult r = fit(Y, cell.model, *inits[k], serial);
      cell.ok = true;
      cell.bic = r.bic;
      cell.loglik = r.loglik;
      cell.iterations = r.iterations;
      cell.converged = r.converged;
      cell.elbo_trace = r.elbo_trace;
      fits[c] = std::move(r);
    } catch (const Error& e) {
      cell.error = e.what();
    }
    cell.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  });

  std::optional<std::size_t> best;
  for (std::size_t c = 0; c < out.cells.size(); ++c) {
    const GridCell& cell = out.cells[c];
    if (cell.ok && (!best || cell.bic < out.cells[*best].bic)) best = c;
  }
  if (!best) {
    std::ostringstream msg;
    msg << "every grid cell failed:";
    for (const auto& cell : out.cells) {
      msg << " [G=" << cell.G << " " << to_string(cell.model) << ": " << cell.error << "]";
    }
    throw GridFailure(msg.str());
  }
  out.best_index = *best;
  out.best = std::move(*fits[*best]);
  return out;
}

}  // namespace mplnmix
