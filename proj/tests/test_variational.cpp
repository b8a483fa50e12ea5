#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mplnmix/errors.hpp"
#include "mplnmix/variational.hpp"
#include "oracles.hpp"

using namespace mplnmix;
using mplnmix::testing::random_spd;
using mplnmix::testing::random_vector;
using mplnmix::testing::elbo_1d;
using mplnmix::testing::log_marginal_1d;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) out(k++) = x;
  return out;
}

Component scalar_component(double mu, double s2) { return {vec({mu}), Matrix::Constant(1, 1, s2)}; }

// Coarse grid over (m, log s) followed by cyclic golden-section polishing.
std::pair<double, double> grid_polish_1d(double y, double mu, double s2) {
  double best_m = 0, best_ls = 0, best = -INFINITY;
  for (double m = -6.0; m <= 6.0; m += 0.01) {
    for (double ls = -7.0; ls <= 1.0; ls += 0.01) {
      const double v = elbo_1d(y, m, std::exp(ls), mu, s2);
      if (v > best) best = v, best_m = m, best_ls = ls;
    }
  }
  auto golden = [](auto&& f, double a, double b) {
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - r * (b - a), d = a + r * (b - a);
    for (int k = 0; k < 100; ++k) {
      if (f(c) > f(d)) {
        b = d;
      } else {
        a = c;
      }
      c = b - r * (b - a);
      d = a + r * (b - a);
    }
    return 0.5 * (a + b);
  };
  for (int round = 0; round < 200; ++round) {
    best_m = golden([&](double m) { return elbo_1d(y, m, std::exp(best_ls), mu, s2); }, best_m - 0.05, best_m + 0.05);
    best_ls = golden([&](double ls) { return elbo_1d(y, best_m, std::exp(ls), mu, s2); }, best_ls - 0.05,
                     best_ls + 0.05);
  }
  return {best_m, std::exp(best_ls)};
}

InnerOptions tight() {
  InnerOptions o;
  o.max_iter = 200;
  o.tol = 1e-10;
  o.gradient_tol = 1e-10;
  return o;
}

}  // namespace

TEST_CASE("ELBO: one-dimensional hand value") {
  const double f = elbo_obs(vec({1.0}), {vec({0.0}), Matrix::Ones(1, 1)}, scalar_component(0.0, 1.0));
  // Quadratic term vanishes; -tr/2 and +d/2 cancel; log-dets are zero.
  CHECK(f == doctest::Approx(-std::exp(0.5)).epsilon(1e-14));
  CHECK(f == doctest::Approx(-1.6487).epsilon(1e-4));
}

TEST_CASE("ELBO matches the closed form in d = 1 and the generic expression in d = 3") {
  CHECK(elbo_obs(vec({5.0}), {vec({1.3}), Matrix::Constant(1, 1, 0.2)}, scalar_component(0.7, 0.6)) ==
        doctest::Approx(elbo_1d(5.0, 1.3, 0.2, 0.7, 0.6)).epsilon(1e-14));

  std::mt19937_64 rng(11);
  const Matrix sigma = random_spd(rng, 3), S = random_spd(rng, 3, 0.05, 0.3);
  const Vector mu = random_vector(rng, 3, 0, 2), m = random_vector(rng, 3, 0, 2), y = vec({3, 0, 7});
  const Matrix P = sigma.inverse();
  double expected = 0.5 * std::log(S.determinant()) - 0.5 * (m - mu).dot(P * (m - mu)) - 0.5 * (P * S).trace() -
                    0.5 * std::log(sigma.determinant()) + 1.5 + m.dot(y);
  for (int j = 0; j < 3; ++j) expected -= std::exp(m(j) + 0.5 * S(j, j)) + std::lgamma(y(j) + 1);
  CHECK(elbo_obs(y, {m, S}, Component{mu, sigma}) == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("ELBO rejects non-SPD inputs") {
  const VariationalSite bad{vec({0, 0}), (Matrix(2, 2) << 1, 2, 2, 1).finished()};
  CHECK_THROWS_AS(elbo_obs(vec({1, 1}), bad, Component{vec({0, 0}), Matrix::Identity(2, 2)}), InvalidParameter);
  const VariationalSite good{vec({0, 0}), Matrix::Identity(2, 2)};
  CHECK_THROWS_AS(elbo_obs(vec({1, 1}), good, Component{vec({0, 0}), -Matrix::Identity(2, 2)}), InvalidParameter);
}

TEST_CASE("ELBO never exceeds the quadrature log-marginal and the optimized gap is small") {
  for (double y : {0.0, 1.0, 5.0, 20.0}) {
    for (double mu : {-1.0, 0.0, 2.0}) {
      for (double s2 : {0.25, 1.0}) {
        CAPTURE(y);
        CAPTURE(mu);
        CAPTURE(s2);
        const double log_f = log_marginal_1d(y, mu, s2);
        const Component comp = scalar_component(mu, s2);
        const InnerResult r = inner_optimize(vec({y}), comp, initial_site(vec({y})));
        const double gap = log_f - r.elbo;
        CHECK(gap >= 0.0);
        CHECK(gap < 0.1);
        // Arbitrary sites are also below the marginal.
        for (double m : {-2.0, 0.0, 3.0}) {
          for (double s : {0.01, 0.5, 2.0}) CHECK(elbo_1d(y, m, s, mu, s2) <= log_f);
        }
      }
    }
  }
}

TEST_CASE("shrinking S from the optimum lowers the bound") {
  const Component comp = scalar_component(0.5, 1.0);
  const InnerResult r = inner_optimize(vec({4.0}), comp, initial_site(vec({4.0})), tight());
  for (double t : {0.25, 0.5, 0.9, 0.99}) {
    VariationalSite shrunk = r.site;
    shrunk.S *= t;
    CHECK(elbo_obs(vec({4.0}), shrunk, comp) < r.elbo);
  }
}

TEST_CASE("fixed-point S update") {
  SUBCASE("d = 1, unit variance, m = 0 converges to the root of S(1 + e^{S/2}) = 1") {
    double lo = 0.0, hi = 1.0;
    for (int k = 0; k < 200; ++k) {
      const double mid = 0.5 * (lo + hi);
      (mid * (1.0 + std::exp(mid / 2)) > 1.0 ? hi : lo) = mid;
    }
    const double root = 0.5 * (lo + hi);
    CHECK(root == doctest::Approx(0.4446).epsilon(1e-4));

    VariationalSite site{vec({0.0}), Matrix::Ones(1, 1)};
    const Component comp = scalar_component(0.0, 1.0);
    for (int k = 0; k < 200; ++k) site.S = update_S(site, comp);
    CHECK(std::abs(site.S(0, 0) - root) < 1e-12);
    CHECK(mplnmix::testing::max_abs(update_S(site, comp) - site.S) < 1e-10);
  }
  SUBCASE("vanishing rates return the prior covariance") {
    std::mt19937_64 rng(5);
    const Matrix sigma = random_spd(rng, 3);
    const VariationalSite site{Vector::Constant(3, -60.0), Matrix::Identity(3, 3)};
    CHECK(mplnmix::testing::max_abs(update_S(site, Component{Vector::Zero(3), sigma}) - sigma) < 1e-12);
  }
  SUBCASE("d = 2 hand value") {
    const VariationalSite site{Vector::Zero(2), Matrix::Identity(2, 2)};
    const Matrix s = update_S(site, Component{Vector::Zero(2), Matrix::Identity(2, 2)});
    const double v = 1.0 / (1.0 + std::exp(0.5));
    CHECK(v == doctest::Approx(0.3775).epsilon(1e-3));
    CHECK(s(0, 0) == doctest::Approx(v).epsilon(1e-14));
    CHECK(s(1, 1) == doctest::Approx(v).epsilon(1e-14));
    CHECK(std::abs(s(0, 1)) < 1e-15);
  }
  SUBCASE("singular prior covariance is rejected") {
    const VariationalSite site{Vector::Zero(2), Matrix::Identity(2, 2)};
    CHECK_THROWS_AS(update_S(site, Component{Vector::Zero(2), Matrix::Ones(2, 2)}), InvalidParameter);
  }
}

TEST_CASE("S update is SPD and bounded by the prior on random inputs") {
  std::mt19937_64 rng(17);
  int draws = 0;
  for (int d : {1, 2, 5}) {
    for (int rep = 0; rep < 500; ++rep, ++draws) {
      const Matrix sigma = random_spd(rng, d, 0.05, 1.0);
      const VariationalSite site{random_vector(rng, d, -3, 6), random_spd(rng, d, 0.01, 0.5)};
      const Matrix s = update_S(site, Component{random_vector(rng, d, -1, 5), sigma});
      CHECK(s == s.transpose());
      Eigen::SelfAdjointEigenSolver<Matrix> es(s), ep(sigma);
      CHECK(es.eigenvalues().minCoeff() > 0.0);
      CHECK(es.eigenvalues().maxCoeff() <= ep.eigenvalues().maxCoeff() * (1 + 1e-12));
    }
  }
  CHECK(draws == 1500);
}

TEST_CASE("Newton m update") {
  SUBCASE("stationary bracket leaves m unchanged") {
    std::mt19937_64 rng(23);
    const Matrix sigma = random_spd(rng, 3), S = random_spd(rng, 3, 0.05, 0.3);
    const Vector m = random_vector(rng, 3, 0, 3), y = vec({4, 1, 9});
    const Vector rate = (m.array() + 0.5 * S.diagonal().array()).exp().matrix();
    const Vector mu = m + sigma * (rate - y);  // makes the bracket vanish
    const Vector next = update_m({m, S}, S, Component{mu, sigma}, y);
    CHECK(mplnmix::testing::max_abs(next - m) < 1e-12);
  }
  SUBCASE("d = 1 hand value") {
    const Vector next =
        update_m({vec({0.0}), Matrix::Ones(1, 1)}, Matrix::Constant(1, 1, 0.4446), scalar_component(0, 1), vec({1}));
    CHECK(next(0) == doctest::Approx(-0.4446 * (std::exp(0.2223) - 1.0)).epsilon(1e-14));
    CHECK(next(0) == doctest::Approx(-0.1107).epsilon(1e-3));
  }
}

TEST_CASE("analytic m-gradient matches central finite differences") {
  std::mt19937_64 rng(29);
  for (int d : {1, 3, 6}) {
    for (int rep = 0; rep < 20; ++rep) {
      const Component comp{random_vector(rng, d, 0, 4), random_spd(rng, d, 0.1, 0.8)};
      const VariationalSite site{random_vector(rng, d, 0, 4), random_spd(rng, d, 0.02, 0.3)};
      Vector y(d);
      for (int j = 0; j < d; ++j) y(j) = std::poisson_distribution<int>(std::exp(site.m(j)))(rng);
      const Vector rate = (site.m.array() + 0.5 * site.S.diagonal().array()).exp().matrix();
      const Vector analytic = y - rate - comp.sigma.inverse() * (site.m - comp.mu);
      const PreparedComponent prep = prepare(comp);
      CHECK(mplnmix::testing::max_abs(m_gradient_residual(site, prep, y) + analytic) <
            1e-10 * (1 + analytic.cwiseAbs().maxCoeff()));
      for (int j = 0; j < d; ++j) {
        const double h = 1e-5;
        VariationalSite up = site, down = site;
        up.m(j) += h;
        down.m(j) -= h;
        const double fd = (elbo_obs(y, up, comp) - elbo_obs(y, down, comp)) / (2 * h);
        CHECK(std::abs(fd - analytic(j)) <= 1e-6 * std::max(1.0, std::abs(analytic(j))));
      }
    }
  }
}

TEST_CASE("inner optimization") {
  SUBCASE("d = 1 optimum matches a grid-and-polish maximization") {
    for (auto [y, mu, s2] : {std::tuple{1.0, 0.0, 1.0}, {20.0, -1.0, 0.25}, {0.0, 2.0, 1.0}, {5.0, 2.0, 0.25}}) {
      CAPTURE(y);
      CAPTURE(mu);
      const InnerResult r = inner_optimize(vec({y}), scalar_component(mu, s2), initial_site(vec({y})));
      const auto [m_ref, s_ref] = grid_polish_1d(y, mu, s2);
      CHECK(r.converged);
      CHECK(std::abs(r.site.m(0) - m_ref) < 1e-5);
      CHECK(std::abs(r.site.S(0, 0) - s_ref) < 1e-5);
    }
  }
  SUBCASE("counts drawn from the model converge within the iteration cap") {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> z(0, 1);
    int worst = 0, runs = 0;
    for (int d : {1, 2, 3, 6, 10}) {
      for (int rep = 0; rep < 40; ++rep, ++runs) {
        const Component comp{random_vector(rng, d, 0, 5), random_spd(rng, d, 0.05, 0.8)};
        const Matrix L = comp.sigma.llt().matrixL();
        Vector e(d);
        for (int j = 0; j < d; ++j) e(j) = z(rng);
        const Vector theta = comp.mu + L * e;
        Vector y(d);
        for (int j = 0; j < d; ++j) y(j) = std::poisson_distribution<long>(std::exp(theta(j)))(rng);
        const InnerResult r = inner_optimize(y, comp, initial_site(y));
        CHECK(r.converged);
        CHECK(r.iterations <= 50);
        CHECK(m_gradient_residual(r.site, prepare(comp), y).cwiseAbs().maxCoeff() < 1e-6);
        worst = std::max(worst, r.iterations);
      }
    }
    MESSAGE("max inner iterations over " << runs << " model draws (d <= 10): " << worst);
  }
  SUBCASE("restarting at the optimum changes nothing") {
    const Component comp{vec({2, 1}), (Matrix(2, 2) << 0.5, 0.2, 0.2, 0.4).finished()};
    const Vector y = vec({9, 1});
    const InnerResult r = inner_optimize(y, comp, initial_site(y), tight());
    const InnerResult again = inner_optimize(y, comp, r.site, tight());
    CHECK(again.iterations <= 1);
    CHECK(mplnmix::testing::max_abs(again.site.m - r.site.m) < 1e-12);
    CHECK(mplnmix::testing::max_abs(again.site.S - r.site.S) < 1e-12);
    CHECK(again.elbo >= r.elbo - 1e-12);
  }
  SUBCASE("bound is nondecreasing along the iterates") {
    std::mt19937_64 rng(37);
    for (int rep = 0; rep < 30; ++rep) {
      const int d = 1 + rep % 5;
      const Component comp{random_vector(rng, d, -1, 6), random_spd(rng, d, 0.05, 1.0)};
      Vector y(d);
      for (int j = 0; j < d; ++j) y(j) = std::poisson_distribution<long>(std::exp(comp.mu(j) + 1.0))(rng);
      double previous = elbo_obs(y, initial_site(y), comp);
      for (int k = 1; k <= 30; ++k) {
        InnerOptions o = tight();
        o.max_iter = k;
        const InnerResult r = inner_optimize(y, comp, initial_site(y), o);
        CHECK(r.elbo >= previous - 1e-10);
        previous = r.elbo;
      }
    }
  }
}

TEST_CASE("responsibilities from component bounds") {
  SUBCASE("single component") {
    const Matrix r = responsibilities_from_elbo(Matrix::Constant(4, 1, -7.5), Vector::Ones(1));
    CHECK((r.array() == 1.0).all());
  }
  SUBCASE("symmetric and hand cases") {
    Matrix f(2, 2);
    f << -3.0, -3.0, 0.0, std::log(3.0);
    const Matrix r = responsibilities_from_elbo(f, Vector::Constant(2, 0.5));
    CHECK(r(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(r(1, 0) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(r(1, 1) == doctest::Approx(0.75).epsilon(1e-15));
  }
  SUBCASE("rows sum to one and are invariant to per-row shifts") {
    std::mt19937_64 rng(41);
    std::normal_distribution<double> z(0, 300);
    Matrix f(50, 4);
    for (Eigen::Index i = 0; i < f.rows(); ++i)
      for (Eigen::Index g = 0; g < 4; ++g) f(i, g) = z(rng);
    const Vector w = vec({0.1, 0.2, 0.3, 0.4});
    const Matrix r = responsibilities_from_elbo(f, w);
    Matrix shifted = f;
    for (Eigen::Index i = 0; i < f.rows(); ++i) shifted.row(i).array() += z(rng) * 10;
    const Matrix rs = responsibilities_from_elbo(shifted, w);
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
      CHECK(std::abs(r.row(i).sum() - 1.0) < 1e-12);
      CHECK((r.row(i).array() >= 0.0).all());
      CHECK((r.row(i).array() <= 1.0).all());
    }
    CHECK(mplnmix::testing::max_abs(r - rs) < 1e-12);
  }
  SUBCASE("a row with no finite bound names the row") {
    Matrix f = Matrix::Zero(3, 2);
    f.row(2).setConstant(-INFINITY);
    try {
      responsibilities_from_elbo(f, Vector::Constant(2, 0.5));
      FAIL("expected a degenerate-observation error");
    } catch (const DegenerateObservation& e) {
      CHECK(e.row() == 2);
    }
  }
}

TEST_CASE("bound matrix and responsibilities over a dataset") {
  const CountMatrix Y = CountMatrix::from_rows({{3, 10}, {0, 1}, {25, 2}});
  MixtureParams p;
  p.weights = vec({0.3, 0.7});
  p.components = {{vec({1, 2}), Matrix::Identity(2, 2)}, {vec({2, 0.5}), 0.5 * Matrix::Identity(2, 2)}};
  VariationalState state(3, 2);
  for (std::size_t i = 0; i < 3; ++i)
    for (int g = 0; g < 2; ++g) state.site(i, g) = initial_site(Y.row(i));
  const Matrix f = elbo_matrix(Y, p, state);
  for (std::size_t i = 0; i < 3; ++i)
    for (int g = 0; g < 2; ++g)
      CHECK(f(i, g) == doctest::Approx(elbo_obs(Y.row(i), state.site(i, g), p.components[g])).epsilon(1e-13));
  const Matrix r = responsibilities(Y, p, state);
  CHECK(mplnmix::testing::max_abs(r - responsibilities_from_elbo(f, p.weights)) < 1e-15);
  double expected = 0;
  for (std::size_t i = 0; i < 3; ++i) expected += std::log(0.3 * std::exp(f(i, 0)) + 0.7 * std::exp(f(i, 1)));
  CHECK(mixture_loglik(f, p.weights) == doctest::Approx(expected).epsilon(1e-13));
}
