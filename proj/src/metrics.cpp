#include "dafc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace dafc::metrics {

LabelPair LabelPair::make(std::vector<int> predicted, std::vector<int> truth) {
  LabelPair p{std::move(predicted), std::move(truth), 0, 0};
  for (int v : p.predicted) p.k_pred = std::max(p.k_pred, static_cast<std::size_t>(std::max(v, 0)) + 1);
  for (int v : p.truth) p.k_truth = std::max(p.k_truth, static_cast<std::size_t>(std::max(v, 0)) + 1);
  p.validate();
  return p;
}

void LabelPair::validate() const {
  if (predicted.size() != truth.size())
    throw std::invalid_argument("label pair: length mismatch " + std::to_string(predicted.size()) + " vs " +
                                std::to_string(truth.size()));
  if (predicted.empty()) throw std::invalid_argument("label pair: no samples");
  for (int v : predicted)
    if (v < 0 || static_cast<std::size_t>(v) >= k_pred)
      throw std::invalid_argument("label pair: predicted label " + std::to_string(v) + " outside [0," +
                                  std::to_string(k_pred) + ")");
  for (int v : truth)
    if (v < 0 || static_cast<std::size_t>(v) >= k_truth)
      throw std::invalid_argument("label pair: truth label " + std::to_string(v) + " outside [0," +
                                  std::to_string(k_truth) + ")");
}

Contingency contingency(const LabelPair& pair) {
  pair.validate();
  Contingency c;
  c.rows = pair.k_pred;
  c.cols = pair.k_truth;
  c.table.assign(c.rows * c.cols, 0);
  c.row_sums.assign(c.rows, 0);
  c.col_sums.assign(c.cols, 0);
  for (std::size_t s = 0; s < pair.predicted.size(); ++s) {
    const auto i = static_cast<std::size_t>(pair.predicted[s]);
    const auto j = static_cast<std::size_t>(pair.truth[s]);
    ++c.table[i * c.cols + j];
    ++c.row_sums[i];
    ++c.col_sums[j];
  }
  c.total = pair.predicted.size();
  return c;
}

std::vector<int> max_weight_assignment(std::span<const double> weights, std::size_t rows, std::size_t cols) {
  if (weights.size() != rows * cols) throw std::invalid_argument("assignment: weight matrix size mismatch");
  // Square min-cost problem on negated weights, padded with zeros; shortest
  // augmenting path with row/column potentials, 1-based as in the classic
  // formulation.
  const std::size_t n = std::max(rows, cols);
  auto cost = [&](std::size_t i, std::size_t j) {  // 1-based
    return (i <= rows && j <= cols) ? -weights[(i - 1) * cols + (j - 1)] : 0.0;
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
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
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> match(rows, -1);
  for (std::size_t j = 1; j <= n; ++j)
    if (p[j] >= 1 && p[j] <= rows && j <= cols) match[p[j] - 1] = static_cast<int>(j - 1);
  return match;
}

double accuracy(const LabelPair& pair) {
  const Contingency c = contingency(pair);
  std::vector<double> w(c.table.begin(), c.table.end());
  const auto match = max_weight_assignment(w, c.rows, c.cols);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < c.rows; ++i)
    if (match[i] >= 0) hit += c.at(i, static_cast<std::size_t>(match[i]));
  return static_cast<double>(hit) / static_cast<double>(c.total);
}

namespace {
double comb2(std::size_t n) { return static_cast<double>(n) * static_cast<double>(n > 0 ? n - 1 : 0) / 2.0; }

double entropy(const std::vector<std::size_t>& counts, double n) {
  double h = 0.0;
  for (auto c : counts)
    if (c > 0) {
      const double p = static_cast<double>(c) / n;
      h -= p * std::log(p);
    }
  return h;
}
}  // namespace

double ari(const LabelPair& pair) {
  const Contingency c = contingency(pair);
  if (c.total < 2) throw std::invalid_argument("ari: needs at least 2 samples");
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (auto v : c.table) sum_ij += comb2(v);
  for (auto v : c.row_sums) sum_a += comb2(v);
  for (auto v : c.col_sums) sum_b += comb2(v);
  const double expected = sum_a * sum_b / comb2(c.total);
  const double max_index = 0.5 * (sum_a + sum_b);
  const double denom = max_index - expected;
  if (denom == 0.0) return 1.0;
  return (sum_ij - expected) / denom;
}

double nmi(const LabelPair& pair) {
  const Contingency c = contingency(pair);
  const double n = static_cast<double>(c.total);
  const double hx = entropy(c.row_sums, n);
  const double hy = entropy(c.col_sums, n);
  if (hx + hy == 0.0) return 0.0;
  double mi = 0.0;
  for (std::size_t i = 0; i < c.rows; ++i)
    for (std::size_t j = 0; j < c.cols; ++j) {
      const auto nij = c.at(i, j);
      if (nij == 0) continue;
      const double pij = static_cast<double>(nij) / n;
      mi += pij * std::log(n * static_cast<double>(nij) /
                           (static_cast<double>(c.row_sums[i]) * static_cast<double>(c.col_sums[j])));
    }
  return std::clamp(2.0 * mi / (hx + hy), 0.0, 1.0);
}

Scores score_all(const LabelPair& pair) { return Scores{accuracy(pair), ari(pair), nmi(pair)}; }

std::vector<int> argmax_rows(std::span<const double> values, std::size_t rows, std::size_t cols) {
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto* row = values.data() + r * cols;
    out[r] = static_cast<int>(std::max_element(row, row + cols) - row);
  }
  return out;
}

}  // namespace dafc::metrics
