#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mplnmix/datagen.hpp"
#include "mplnmix/engine.hpp"
#include "mplnmix/errors.hpp"
#include "mplnmix/evaluation.hpp"
#include "support.hpp"

using namespace mplnmix;
using mplnmix::testing::max_abs;

namespace {

const LabeledCounts& sim2_small() {
  static const LabeledCounts data = simulate(preset("sim2"), 101, 0, 200);
  return data;
}

const LabeledCounts& sim1_small() {
  static const LabeledCounts data = simulate(preset("sim1"), 202, 0, 400);
  return data;
}

FitConfig quick_config(std::vector<int> g, std::vector<CovarianceModel> models) {
  FitConfig c;
  c.g_values = std::move(g);
  c.models = std::move(models);
  c.small_em_starts = 4;
  c.small_em_iters = 5;
  c.seed = 42;
  return c;
}

void check_monotone(const std::vector<double>& trace) {
  for (std::size_t t = 1; t < trace.size(); ++t) CHECK(trace[t] >= trace[t - 1] - 1e-8);
}

bool close_rel(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(b)); }

}  // namespace

TEST_CASE("Aitken stopping rule") {
  SUBCASE("geometric sequence has its exact limit") {
    auto l = [](int m) { return 10.0 - std::ldexp(1.0, -m); };
    const AitkenDecision d = aitken_stop(l(4), l(5), l(6), 1e-3, std::nullopt);
    CHECK_FALSE(d.fallback);
    REQUIRE(d.asymptote.has_value());
    CHECK(*d.asymptote == 10.0);
    CHECK_FALSE(d.stop);  // no previous asymptote yet
    const AitkenDecision next = aitken_stop(l(5), l(6), l(7), 1e-3, d.asymptote);
    CHECK(*next.asymptote == 10.0);
    CHECK(next.stop);  // change of exactly zero counts as converged
  }
  SUBCASE("constant sequence takes the fallback and stops") {
    const AitkenDecision d = aitken_stop(-5.0, -5.0, -5.0, 1e-3, std::nullopt);
    CHECK(d.fallback);
    CHECK(d.stop);
    CHECK_FALSE(d.asymptote.has_value());
  }
  SUBCASE("accelerating sequence (a >= 1) falls back to the plain difference") {
    const AitkenDecision d = aitken_stop(0.0, 1.0, 3.0, 1e-3, std::nullopt);
    CHECK(d.fallback);
    CHECK_FALSE(d.stop);
  }
  SUBCASE("asymptote moving by at least epsilon does not stop") {
    const AitkenDecision d = aitken_stop(0.0, 1.0, 1.5, 1e-3, 1.9);
    CHECK(*d.asymptote == doctest::Approx(2.0));
    CHECK_FALSE(d.stop);
  }
  SUBCASE("decreasing asymptote does not stop") {
    const AitkenDecision d = aitken_stop(0.0, 1.0, 1.5, 1e-3, 2.0005);
    CHECK_FALSE(d.stop);
  }
  CHECK(FitConfig{}.epsilon == 0.001);
  CHECK(FitOptions{}.epsilon == 0.001);
}

TEST_CASE("BIC") {
  CHECK(bic(-100.0, 5, 100) == doctest::Approx(200.0 + 5.0 * std::log(100.0)).epsilon(1e-15));
  CHECK(bic(-100.0, 5, 100) == doctest::Approx(223.0259).epsilon(1e-6));
  CHECK(bic(-42.5, 0, 10) == 85.0);
  CHECK(bic(-10.0, 3, 50) < bic(-10.0, 4, 50));
}

TEST_CASE("hard labels break ties toward the lowest index") {
  Matrix r(3, 3);
  r << 0.2, 0.4, 0.4, 1.0 / 3, 1.0 / 3, 1.0 / 3, 0.1, 0.2, 0.7;
  CHECK(hard_labels(r) == std::vector<int>{1, 0, 2});
}

TEST_CASE("configuration validation") {
  FitConfig c;
  CHECK_NOTHROW(c.validate());
  c.epsilon = 0.0;
  CHECK_THROWS_AS(c.validate(), InvalidInput);
  c = FitConfig{};
  c.g_values.clear();
  CHECK_THROWS_AS(c.validate(), InvalidInput);
  c = FitConfig{};
  c.small_em_starts = 0;
  CHECK_THROWS_AS(c.validate(), InvalidInput);
}

TEST_CASE("small-EM initialization") {
  const CountMatrix& Y = sim2_small().counts;
  SUBCASE("G = 1 uses the site means") {
    const Initialization init = small_em_init(Y, 1, quick_config({1}, {CovarianceModel::EII}));
    Vector mean = Vector::Zero(6);
    for (std::size_t i = 0; i < Y.rows(); ++i) mean += initial_site(Y.row(i)).m;
    mean /= static_cast<double>(Y.rows());
    FitConfig zero = quick_config({1}, {CovarianceModel::EII});
    zero.small_em_iters = 0;
    const Initialization raw = small_em_init(Y, 1, zero);
    CHECK(max_abs(raw.params.components[0].mu - mean) < 1e-12);
    CHECK(init.params.weights(0) == 1.0);
  }
  SUBCASE("same seed gives identical output, different seed differs") {
    const FitConfig c = quick_config({2}, {CovarianceModel::EII});
    const Initialization a = small_em_init(Y, 2, c);
    const Initialization b = small_em_init(Y, 2, c);
    CHECK(a.loglik == b.loglik);
    CHECK(a.params.components[0].mu == b.params.components[0].mu);
    CHECK(a.state.resp() == b.state.resp());
    FitConfig threaded = c;
    threaded.threads = 3;
    CHECK(small_em_init(Y, 2, threaded).loglik == a.loglik);
  }
  SUBCASE("G beyond n is rejected") {
    const CountMatrix tiny = CountMatrix::from_rows({{1, 2}, {3, 4}});
    CHECK_THROWS_AS(small_em_init(tiny, 3, quick_config({3}, {CovarianceModel::EII})), InvalidInput);
  }
}

TEST_CASE("full fit on two well-separated groups") {
  const LabeledCounts& data = sim2_small();
  FitConfig c = quick_config({2}, {CovarianceModel::EII});
  c.small_em_starts = 20;
  c.small_em_iters = 20;
  const Initialization init = small_em_init(data.counts, 2, c);
  const FitResult r = fit(data.counts, CovarianceModel::EII, init, fit_options(c));
  CHECK(r.converged);
  // Oracle: classification under the generating parameters. The groups
  // overlap slightly, so even this classifier is not always perfect.
  MixtureParams truth = preset("sim2").mpln;
  VariationalState oracle(data.counts.rows(), 2);
  for (std::size_t i = 0; i < data.counts.rows(); ++i)
    for (int g = 0; g < 2; ++g)
      oracle.site(i, g) =
          inner_optimize(data.counts.row(i), truth.components[g], initial_site(data.counts.row(i))).site;
  const std::vector<int> bayes = hard_labels(responsibilities(data.counts, truth, oracle));
  CHECK(ari(r.labels, bayes) >= 0.97);
  CHECK(ari(r.labels, data.labels) >= 0.95);
  check_monotone(r.elbo_trace);
  CHECK(r.elbo_trace.size() == static_cast<std::size_t>(r.iterations) + 1);
  CHECK(r.loglik == r.elbo_trace.back());
  CHECK(std::abs(r.params.weights.sum() - 1.0) < 1e-12);
  CHECK(r.bic == doctest::Approx(bic(r.loglik, count_free_params(CovarianceModel::EII, 6, 2).total, 200)));
  CHECK(r.labels == hard_labels(r.state.resp()));
  for (const auto& comp : r.params.components) CHECK(is_spd(comp.sigma));
}

TEST_CASE("every model keeps the bound monotone and the estimates SPD") {
  const LabeledCounts& data = sim1_small();
  const FitConfig c = quick_config({3}, {});
  const Initialization init = small_em_init(data.counts, 3, c);
  for (auto model : kAllModels) {
    CAPTURE(to_string(model));
    FitOptions o = fit_options(c);
    const FitResult r = fit(data.counts, model, init, o);
    check_monotone(r.elbo_trace);
    CHECK(std::abs(r.params.weights.sum() - 1.0) < 1e-12);
    for (const auto& comp : r.params.components) CHECK(is_spd(comp.sigma));
    CHECK(r.covariance.free_parameters() == count_free_params(model, 3, 3).cov_params);
  }
}

TEST_CASE("G = 1 VVV estimates are the plain site moments") {
  const CountMatrix& Y = sim1_small().counts;
  const FitConfig c = quick_config({1}, {CovarianceModel::VVV});
  const FitResult r = fit(Y, CovarianceModel::VVV, small_em_init(Y, 1, c), fit_options(c));
  CHECK((r.state.resp().array() == 1.0).all());
  Vector mean = Vector::Zero(3);
  for (std::size_t i = 0; i < Y.rows(); ++i) mean += r.state.site(i, 0).m;
  mean /= static_cast<double>(Y.rows());
  Matrix cov = Matrix::Zero(3, 3);
  for (std::size_t i = 0; i < Y.rows(); ++i) {
    const VariationalSite& s = r.state.site(i, 0);
    cov += (s.m - mean) * (s.m - mean).transpose() + s.S;
  }
  cov /= static_cast<double>(Y.rows());
  CHECK(max_abs(r.params.components[0].mu - mean) < 1e-12);
  CHECK(max_abs(r.params.components[0].sigma - cov) < 1e-12);
}

TEST_CASE("converged fit is a fixed point of one more iteration") {
  const LabeledCounts& data = sim2_small();
  const FitConfig c = quick_config({2}, {CovarianceModel::VVI});
  FitOptions o = fit_options(c);
  o.epsilon = 1e-10;
  o.max_outer = 2000;
  const FitResult r = fit(data.counts, CovarianceModel::VVI, small_em_init(data.counts, 2, c), o);
  CHECK(r.converged);
  Initialization again{r.params, r.state, r.loglik};
  FitOptions one = o;
  one.max_outer = 1;
  const FitResult extra = fit(data.counts, CovarianceModel::VVI, again, one);
  CHECK(std::abs(extra.loglik - r.loglik) < 1e-8);
}

TEST_CASE("permuting component indices in the initialization permutes the output") {
  const LabeledCounts& data = sim1_small();
  const FitConfig c = quick_config({3}, {});
  const Initialization init = small_em_init(data.counts, 3, c);
  const std::vector<int> perm{2, 0, 1};
  Initialization p = init;
  for (int g = 0; g < 3; ++g) {
    p.params.weights(g) = init.params.weights(perm[g]);
    p.params.components[g] = init.params.components[perm[g]];
    p.state.resp().col(g) = init.state.resp().col(perm[g]);
    for (std::size_t i = 0; i < data.counts.rows(); ++i) p.state.site(i, g) = init.state.site(i, perm[g]);
  }
  for (auto model : {CovarianceModel::VVV, CovarianceModel::EEV, CovarianceModel::VVE, CovarianceModel::EII}) {
    CAPTURE(to_string(model));
    const FitResult a = fit(data.counts, model, init, fit_options(c));
    const FitResult b = fit(data.counts, model, p, fit_options(c));
    REQUIRE(a.elbo_trace.size() == b.elbo_trace.size());
    for (std::size_t t = 0; t < a.elbo_trace.size(); ++t) CHECK(close_rel(b.elbo_trace[t], a.elbo_trace[t], 1e-10));
    CHECK(close_rel(b.bic, a.bic, 1e-10));
    CHECK(ari(a.labels, data.labels) == ari(b.labels, data.labels));
    for (int g = 0; g < 3; ++g) {
      CHECK(max_abs(b.params.components[g].mu - a.params.components[perm[g]].mu) < 1e-8);
    }
  }
}

TEST_CASE("permuting observations permutes labels and leaves scalars unchanged") {
  const LabeledCounts& data = sim1_small();
  const std::size_t n = data.counts.rows();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(3);
  std::shuffle(order.begin(), order.end(), rng);
  const CountMatrix Yp = data.counts.permuted(order);

  const FitConfig c = quick_config({3}, {});
  const Initialization init = small_em_init(data.counts, 3, c);
  Initialization ip = init;
  for (std::size_t i = 0; i < n; ++i) {
    ip.state.resp().row(i) = init.state.resp().row(order[i]);
    for (int g = 0; g < 3; ++g) ip.state.site(i, g) = init.state.site(order[i], g);
  }
  for (auto model : {CovarianceModel::VVV, CovarianceModel::VVE}) {
    const FitResult a = fit(data.counts, model, init, fit_options(c));
    const FitResult b = fit(Yp, model, ip, fit_options(c));
    REQUIRE(a.elbo_trace.size() == b.elbo_trace.size());
    for (std::size_t t = 0; t < a.elbo_trace.size(); ++t) CHECK(close_rel(b.elbo_trace[t], a.elbo_trace[t], 1e-10));
    CHECK(close_rel(b.bic, a.bic, 1e-10));
    for (std::size_t i = 0; i < n; ++i) CHECK(b.labels[i] == a.labels[order[i]]);
  }
}

TEST_CASE("grid search") {
  const LabeledCounts& data = sim2_small();
  SUBCASE("table shape, selection rule and determinism across worker counts") {
    FitConfig c = quick_config({1, 2, 3}, {CovarianceModel::EII, CovarianceModel::VII, CovarianceModel::VVV});
    const GridResult a = grid_search(data.counts, c);
    c.threads = 4;
    const GridResult b = grid_search(data.counts, c);
    REQUIRE(a.cells.size() == 9);
    for (std::size_t k = 0; k < a.cells.size(); ++k) {
      CHECK(a.cells[k].G == c.g_values[k / 3]);
      CHECK(a.cells[k].model == c.models[k % 3]);
      CHECK(a.cells[k].bic == b.cells[k].bic);
      CHECK(a.cells[k].elbo_trace == b.cells[k].elbo_trace);
      check_monotone(a.cells[k].elbo_trace);
    }
    CHECK(a.best_index == b.best_index);
    CHECK(a.best.labels == b.best.labels);
    double best = INFINITY;
    for (const auto& cell : a.cells)
      if (cell.ok) best = std::min(best, cell.bic);
    CHECK(a.best.bic == best);
    CHECK(a.cells[a.best_index].G == 2);
  }
  SUBCASE("single cell equals the direct fit") {
    const FitConfig c = quick_config({2}, {CovarianceModel::EEI});
    const GridResult g = grid_search(data.counts, c);
    const FitResult direct = fit(data.counts, CovarianceModel::EEI, small_em_init(data.counts, 2, c), fit_options(c));
    CHECK(g.cells.size() == 1);
    CHECK(g.best.bic == direct.bic);
    CHECK(g.best.elbo_trace == direct.elbo_trace);
  }
  SUBCASE("cells that hit max_outer stay eligible and flagged") {
    FitConfig c = quick_config({1, 2}, {CovarianceModel::EII, CovarianceModel::VVV});
    c.max_outer = 2;
    const GridResult g = grid_search(data.counts, c);
    double best = INFINITY;
    for (const auto& cell : g.cells) {
      CHECK_FALSE(cell.converged);
      CHECK(cell.iterations == 2);
      best = std::min(best, cell.bic);
    }
    CHECK(g.best.bic == best);
    CHECK_FALSE(g.best.converged);
  }
  SUBCASE("all cells failing raises a grid failure naming the cells") {
    const CountMatrix tiny = CountMatrix::from_rows({{1, 2}, {3, 4}, {5, 6}});
    try {
      grid_search(tiny, quick_config({5}, {CovarianceModel::EII, CovarianceModel::VVV}));
      FAIL("expected grid failure");
    } catch (const GridFailure& e) {
      const std::string what = e.what();
      CHECK(what.find("G=5 EII") != std::string::npos);
      CHECK(what.find("G=5 VVV") != std::string::npos);
    }
  }
  SUBCASE("failed cells are reported alongside successful ones") {
    const CountMatrix tiny = CountMatrix::from_rows({{1, 2}, {3, 4}, {5, 6}, {2, 2}});
    const GridResult g = grid_search(tiny, quick_config({1, 9}, {CovarianceModel::EII}));
    CHECK(g.cells[0].ok);
    CHECK_FALSE(g.cells[1].ok);
    CHECK_FALSE(g.cells[1].error.empty());
    CHECK(g.best_index == 0);
  }
}

TEST_CASE("collapsed component is reported by index") {
  const CountMatrix& Y = sim2_small().counts;
  VariationalState state(Y.rows(), 2);
  for (std::size_t i = 0; i < Y.rows(); ++i) {
    state.site(i, 0) = state.site(i, 1) = initial_site(Y.row(i));
    state.resp()(i, 0) = 1.0;
  }
  try {
    m_step(Y, CovarianceModel::VVV, state);
    FAIL("expected a collapse");
  } catch (const ComponentCollapse& e) {
    CHECK(e.component() == 1);
  }
}

TEST_CASE("mismatched initialization is rejected") {
  const CountMatrix& Y = sim2_small().counts;
  const Initialization init = small_em_init(Y, 2, quick_config({2}, {CovarianceModel::EII}));
  const CountMatrix other = CountMatrix::from_rows({{1, 2, 3, 4, 5, 6}});
  CHECK_THROWS_AS(fit(other, CovarianceModel::EII, init), InvalidInput);
}
