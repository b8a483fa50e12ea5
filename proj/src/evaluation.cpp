#include "mplnmix/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <unordered_map>

#include "mplnmix/errors.hpp"

namespace mplnmix {

namespace {

using Wide = __int128;

Wide pairs(std::int64_t k) { return static_cast<Wide>(k) * (k - 1) / 2; }

std::vector<int> dense_codes(std::span<const int> labels, std::vector<int>& order) {
  std::unordered_map<int, int> index;
  std::vector<int> codes(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = index.emplace(labels[i], static_cast<int>(order.size()));
    if (inserted) order.push_back(labels[i]);
    codes[i] = it->second;
  }
  return codes;
}

struct Moments {
  std::vector<double> values;
  void add(double x) { values.push_back(x); }
  double mean() const {
    double t = 0.0;
    for (double v : values) t += v;
    return t / static_cast<double>(values.size());
  }
  double sd() const {
    if (values.size() < 2) return 0.0;
    const double m = mean();
    double t = 0.0;
    for (double v : values) t += (v - m) * (v - m);
    return std::sqrt(t / static_cast<double>(values.size() - 1));
  }
};

}  // namespace

std::int64_t Contingency::total() const {
  std::int64_t t = 0;
  for (const auto& r : counts)
    for (auto v : r) t += v;
  return t;
}

Contingency Contingency::transposed() const {
  Contingency out;
  out.row_labels = col_labels;
  out.col_labels = row_labels;
  out.counts.assign(col_labels.size(), std::vector<std::int64_t>(row_labels.size(), 0));
  for (std::size_t r = 0; r < row_labels.size(); ++r)
    for (std::size_t c = 0; c < col_labels.size(); ++c) out.counts[c][r] = counts[r][c];
  return out;
}

Contingency confusion(std::span<const int> labels_pred, std::span<const int> labels_true) {
  if (labels_pred.size() != labels_true.size()) throw InvalidInput("labelings differ in length");
  Contingency out;
  const std::vector<int> rows = dense_codes(labels_pred, out.row_labels);
  const std::vector<int> cols = dense_codes(labels_true, out.col_labels);
  out.counts.assign(out.row_labels.size(), std::vector<std::int64_t>(out.col_labels.size(), 0));
  for (std::size_t i = 0; i < rows.size(); ++i) ++out.counts[rows[i]][cols[i]];
  return out;
}

double ari(std::span<const int> labels_a, std::span<const int> labels_b) {
  if (labels_a.size() != labels_b.size()) throw InvalidInput("labelings differ in length");
  if (labels_a.size() < 2) throw InvalidInput("ARI needs at least two observations");
  const Contingency table = confusion(labels_a, labels_b);
  const auto n = static_cast<std::int64_t>(labels_a.size());
  Wide index = 0;
  std::vector<std::int64_t> row_sums(table.row_labels.size(), 0), col_sums(table.col_labels.size(), 0);
  for (std::size_t r = 0; r < table.counts.size(); ++r) {
    for (std::size_t c = 0; c < table.counts[r].size(); ++c) {
      index += pairs(table.counts[r][c]);
      row_sums[r] += table.counts[r][c];
      col_sums[c] += table.counts[r][c];
    }
  }
  Wide a = 0, b = 0;
  for (auto s : row_sums) a += pairs(s);
  for (auto s : col_sums) b += pairs(s);
  const Wide total = pairs(n);
  // (index - a b / N) / ((a + b) / 2 - a b / N), scaled by 2N to stay integral.
  const Wide num = 2 * (index * total - a * b);
  const Wide den = (a + b) * total - 2 * a * b;
  if (den == 0) return 1.0;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::vector<int> hungarian_max(const Matrix& profit) {
  const Eigen::Index n = profit.rows();
  if (profit.cols() != n) throw InvalidInput("assignment matrix must be square");
  if (n == 0) return {};
  // Shortest augmenting path on costs = max - profit (1-based potentials).
  const double top = profit.maxCoeff();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<Eigen::Index> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (Eigen::Index i = 1; i <= n; ++i) {
    p[0] = i;
    Eigen::Index j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const Eigen::Index i0 = p[j0];
      double delta = inf;
      Eigen::Index j1 = 0;
      for (Eigen::Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = (top - profit(i0 - 1, j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Eigen::Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const Eigen::Index j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(n, -1);
  for (Eigen::Index j = 1; j <= n; ++j) assignment[p[j] - 1] = static_cast<int>(j - 1);
  return assignment;
}

std::vector<int> align_components(std::span<const int> fitted, std::span<const int> truth, int G) {
  if (fitted.size() != truth.size()) throw InvalidInput("labelings differ in length");
  Matrix table = Matrix::Zero(G, G);
  for (std::size_t i = 0; i < fitted.size(); ++i) {
    if (fitted[i] < 0 || fitted[i] >= G || truth[i] < 0 || truth[i] >= G) {
      throw InvalidInput("label outside 0..G-1 during alignment");
    }
    table(fitted[i], truth[i]) += 1.0;
  }
  return hungarian_max(table);
}

RecoverySummary recovery_summary(std::span<const FitResult> fits, std::span<const std::vector<int>> true_labels,
                                 int true_G) {
  if (fits.size() != true_labels.size()) throw InvalidInput("fits and label sets differ in count");
  RecoverySummary out;
  out.G = true_G;
  if (fits.empty()) return out;
  const Eigen::Index d = fits.front().params.dim();

  struct Acc {
    Moments weight;
    std::vector<Moments> mu, sigma, cmean, cvar;
  };
  std::vector<Acc> acc(true_G);
  for (auto& a : acc) {
    a.mu.resize(d);
    a.sigma.resize(d * d);
    a.cmean.resize(d);
    a.cvar.resize(d);
  }
  for (std::size_t k = 0; k < fits.size(); ++k) {
    const FitResult& f = fits[k];
    if (f.params.num_components() != true_G) {
      out.notes.push_back("fit " + std::to_string(k + 1) + " has G = " + std::to_string(f.params.num_components()) +
                          ", expected " + std::to_string(true_G) + "; excluded");
      continue;
    }
    const std::vector<int> map = align_components(f.labels, true_labels[k], true_G);
    for (int g = 0; g < true_G; ++g) {
      Acc& a = acc[map[g]];
      const Component& c = f.params.components[g];
      const CountMoments mom = mpln_moments(c.mu, c.sigma);
      a.weight.add(f.params.weights(g));
      for (Eigen::Index j = 0; j < d; ++j) {
        a.mu[j].add(c.mu(j));
        a.cmean[j].add(mom.mean(j));
        a.cvar[j].add(mom.cov(j, j));
        for (Eigen::Index l = 0; l < d; ++l) a.sigma[j * d + l].add(c.sigma(j, l));
      }
    }
    ++out.included;
  }
  if (out.included == 0) return out;
  for (const Acc& a : acc) {
    ComponentRecovery r;
    r.weight_mean = a.weight.mean();
    r.weight_se = a.weight.sd();
    r.mu_mean.resize(d);
    r.mu_se.resize(d);
    r.count_mean_mean.resize(d);
    r.count_mean_se.resize(d);
    r.count_var_mean.resize(d);
    r.count_var_se.resize(d);
    r.sigma_mean.resize(d, d);
    r.sigma_se.resize(d, d);
    for (Eigen::Index j = 0; j < d; ++j) {
      r.mu_mean(j) = a.mu[j].mean();
      r.mu_se(j) = a.mu[j].sd();
      r.count_mean_mean(j) = a.cmean[j].mean();
      r.count_mean_se(j) = a.cmean[j].sd();
      r.count_var_mean(j) = a.cvar[j].mean();
      r.count_var_se(j) = a.cvar[j].sd();
      for (Eigen::Index l = 0; l < d; ++l) {
        const Moments& s = a.sigma[j * d + l];
        r.sigma_mean(j, l) = s.mean();
        r.sigma_se(j, l) = s.sd();
      }
    }
    out.components.push_back(std::move(r));
  }
  return out;
}

}  // namespace mplnmix
