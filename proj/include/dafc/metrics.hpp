#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dafc::metrics {

/// Predicted cluster ids in [0, k_pred) against truth classes in [0, k_truth).
struct LabelPair {
  std::vector<int> predicted;
  std::vector<int> truth;
  std::size_t k_pred = 0;
  std::size_t k_truth = 0;

  /// Ranges inferred as max label + 1.
  static LabelPair make(std::vector<int> predicted, std::vector<int> truth);
  /// Throws std::invalid_argument on length mismatch, empty input or an
  /// out-of-range label.
  void validate() const;
};

struct Contingency {
  std::size_t rows = 0, cols = 0;  // k_pred × k_truth
  std::vector<std::size_t> table;  // row-major n_ij
  std::vector<std::size_t> row_sums, col_sums;
  std::size_t total = 0;

  std::size_t at(std::size_t i, std::size_t j) const { return table[i * cols + j]; }
};

Contingency contingency(const LabelPair& pair);

/// Maximum-weight one-to-one assignment of rows to columns of a rows×cols
/// weight matrix (Hungarian algorithm).  result[i] is the column matched to
/// row i, or -1 when rows > cols leaves it unmatched.
std::vector<int> max_weight_assignment(std::span<const double> weights, std::size_t rows, std::size_t cols);

/// Fraction of samples on the optimal cluster-to-class matching.
double accuracy(const LabelPair& pair);
/// Adjusted Rand Index; 1.0 when the adjustment is 0/0.  Needs N >= 2.
double ari(const LabelPair& pair);
/// 2 I(X;Y) / (H(X) + H(Y)) with natural logs; 0 when both partitions are constant.
double nmi(const LabelPair& pair);

struct Scores {
  double acc = 0.0, ari = 0.0, nmi = 0.0;
};
Scores score_all(const LabelPair& pair);

/// Row-wise argmax of a row-major rows×cols matrix.
std::vector<int> argmax_rows(std::span<const double> values, std::size_t rows, std::size_t cols);

}  // namespace dafc::metrics
