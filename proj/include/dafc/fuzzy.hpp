#pragma once

// Fuzzy clustering layer: pseudo-label similarity and refinement, the
// weighted adaptive entropy, closed-form membership / weight / centroid
// updates, and the loss terms of the joint objective.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dafc/autograd.hpp"
#include "dafc/tensor.hpp"

namespace dafc::fuzzy {

/// Distance floor applied before the membership power law.
inline constexpr double kDistanceFloor = 1e-12;
/// Cluster mass below which a centroid is considered empty and re-seeded.
inline constexpr double kDegenerateMass = 1e-12;

struct FuzzyState {
  Tensor mu;    // M×k memberships, rows on the simplex
  Tensor wmat;  // M×k adaptive weights, rows on the simplex
  double m = 2.0;
  double lambda1 = 0.5;
  double lambda2 = 0.5;

  /// Uniform memberships and weights (1/k everywhere).
  static FuzzyState uniform(std::size_t M, std::size_t k, double m = 2.0, double lambda1 = 0.5,
                            double lambda2 = 0.5);
  /// Rows [..] of mu and wmat as a new state with the same coefficients.
  FuzzyState rows(std::span<const std::size_t> idx) const;
  void validate() const;
};

/// Cosine similarity between rows of the label matrix Y (B×k).
/// Throws std::invalid_argument naming the first all-zero row.
Tensor similarity_matrix(const Tensor& Y);

/// refined_i = normalize(sum_j C'_ij y_j) where C' keeps entries of C above
/// eps_r plus the diagonal.
Tensor refine_pseudo_labels(const Tensor& Y, const Tensor& C, double eps_r);

struct PseudoLabelBatch {
  Tensor raw_labels;
  Tensor sim;
  Tensor refined;
  double eps_r = 0.9;

  static PseudoLabelBatch build(Tensor Y, double eps_r);
  /// Mean absolute difference between refined and raw labels.
  double mean_refinement() const;
};

/// (1/B) sum_i ||x_i - x_hat_i||^2 + beta ||head_i - refined_i||^2.
/// x may be any shape with B leading rows matching x_hat's element count.
Var reconstruction_loss(const Var& x_hat, const Tensor& x, const Var& head, const Tensor& refined, double beta);

/// lambda1 * sum_i (1 - sum_j mu_ij) + lambda2 * sum_ij w_ij ln w_ij.
double entropy_term(const FuzzyState& state);

struct ClusteringLoss {
  Var loss;          // (sum_ij mu_ij^m l_ij + H) / B
  Tensor distances;  // l_ij = ||x_i - decoded_j||^2, B×k
  double entropy = 0.0;
};

/// decoded: the decoded centroids (k rows, any trailing shape); x: B rows.
ClusteringLoss clustering_loss(const Var& decoded, const Tensor& x, const FuzzyState& state);

/// Unnormalized power law (lambda1 / (m l))^(1/(m-1)), l floored.
Tensor raw_membership(const Tensor& distances, double m, double lambda1);

/// Row-normalized memberships from distances; replaces state.mu.  The
/// normalized rows do not depend on lambda1 (it cancels), so lambda1 = 0 is
/// accepted as the limit.
const Tensor& update_membership(const Tensor& distances, FuzzyState& state);

/// Per-cluster weight exp(2 s_j - 1), s_j the component mean of decoded
/// centroid j, normalized over clusters and broadcast to every row; replaces
/// state.wmat.
const Tensor& update_weights(const Tensor& decoded, FuzzyState& state);

struct CentroidUpdate {
  Tensor centroids;
  std::vector<std::size_t> reseeded;  // clusters that were empty
};

/// c_j = sum_i mu_ij^m z_i / sum_i mu_ij^m.  Empty clusters are moved to the
/// point of z farthest from the other centroids.
CentroidUpdate update_centroids(const Tensor& z, const Tensor& previous, const FuzzyState& state);

/// Closed-form half of one alternation: memberships from distances, weights
/// from decoded centroids, then centroids from bottleneck points z.
CentroidUpdate alternate(const Tensor& distances, const Tensor& decoded, const Tensor& z, const Tensor& previous,
                         FuzzyState& state);

struct FcmResult {
  Tensor centroids;  // k×d
  Tensor mu;         // M×k
  double objective = 0.0;  // sum_ij mu_ij^m ||z_i - c_j||^2
  std::size_t iterations = 0;
};

/// Plain fuzzy c-means on the rows of z, seeded by k-means++; the best of
/// `restarts` runs by objective is returned.
FcmResult fcm_fit(const Tensor& z, std::size_t k, double m, std::size_t restarts, std::uint64_t seed,
                  std::size_t max_iter = 300, double tol = 1e-10);

}  // namespace dafc::fuzzy
