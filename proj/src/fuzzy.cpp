#include "dafc/fuzzy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "dafc/kernels.hpp"
#include "dafc/ops.hpp"
#include "dafc/rng.hpp"

namespace dafc::fuzzy {

namespace {

void require_rank2(const char* what, const Tensor& t) {
  if (t.rank() != 2) throw ShapeError(std::string(what) + ": expected a matrix, got " + shape_str(t.shape()));
}

void normalize_rows(Tensor& t) {
  const std::size_t R = t.dim(0), C = t.dim(1);
  for (std::size_t r = 0; r < R; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += t.at(r, c);
    for (std::size_t c = 0; c < C; ++c) t.at(r, c) /= s;
  }
}

}  // namespace

FuzzyState FuzzyState::uniform(std::size_t M, std::size_t k, double m, double lambda1, double lambda2) {
  const double u = 1.0 / static_cast<double>(k);
  return FuzzyState{Tensor({M, k}, u), Tensor({M, k}, u), m, lambda1, lambda2};
}

FuzzyState FuzzyState::rows(std::span<const std::size_t> idx) const {
  return FuzzyState{mu.gather_rows(idx), wmat.gather_rows(idx), m, lambda1, lambda2};
}

void FuzzyState::validate() const {
  require_rank2("FuzzyState.mu", mu);
  if (wmat.shape() != mu.shape())
    throw ShapeError("FuzzyState: wmat " + shape_str(wmat.shape()) + " vs mu " + shape_str(mu.shape()));
  if (!(m > 1.0)) throw std::invalid_argument("FuzzyState: fuzzifier m must be > 1");
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw std::invalid_argument("FuzzyState: lambdas must be >= 0");
}

Tensor similarity_matrix(const Tensor& Y) {
  require_rank2("similarity_matrix", Y);
  const std::size_t B = Y.dim(0), k = Y.dim(1);
  std::vector<double> norm(B);
  for (std::size_t i = 0; i < B; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) s += Y.at(i, c) * Y.at(i, c);
    if (s == 0.0) throw std::invalid_argument("similarity_matrix: label row " + std::to_string(i) + " is all zero");
    norm[i] = std::sqrt(s);
  }
  Tensor C({B, B});
  for (std::size_t i = 0; i < B; ++i) {
    C.at(i, i) = 1.0;
    for (std::size_t j = i + 1; j < B; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < k; ++c) dot += Y.at(i, c) * Y.at(j, c);
      const double v = std::clamp(dot / (norm[i] * norm[j]), -1.0, 1.0);
      C.at(i, j) = v;
      C.at(j, i) = v;
    }
  }
  return C;
}

Tensor refine_pseudo_labels(const Tensor& Y, const Tensor& C, double eps_r) {
  require_rank2("refine_pseudo_labels", Y);
  if (!(eps_r > 0.0 && eps_r < 1.0))
    throw std::invalid_argument("refine_pseudo_labels: threshold eps_r must lie in (0,1), got " + std::to_string(eps_r));
  const std::size_t B = Y.dim(0), k = Y.dim(1);
  if (C.shape() != Shape{B, B})
    throw ShapeError("refine_pseudo_labels: similarity " + shape_str(C.shape()) + " for " + std::to_string(B) +
                     " labels");
  Tensor out({B, k});
  for (std::size_t i = 0; i < B; ++i) {
    double* row = out.ptr() + i * k;
    for (std::size_t j = 0; j < B; ++j) {
      const double w = i == j ? C.at(i, i) : C.at(i, j);
      if (i != j && !(w > eps_r)) continue;
      for (std::size_t c = 0; c < k; ++c) row[c] += w * Y.at(j, c);
    }
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) s += row[c];
    if (!(s > 0.0)) throw std::invalid_argument("refine_pseudo_labels: row " + std::to_string(i) + " has no mass");
    for (std::size_t c = 0; c < k; ++c) row[c] /= s;
  }
  return out;
}

PseudoLabelBatch PseudoLabelBatch::build(Tensor Y, double eps_r) {
  PseudoLabelBatch b;
  b.sim = similarity_matrix(Y);
  b.refined = refine_pseudo_labels(Y, b.sim, eps_r);
  b.raw_labels = std::move(Y);
  b.eps_r = eps_r;
  return b;
}

double PseudoLabelBatch::mean_refinement() const {
  double s = 0.0;
  for (std::size_t i = 0; i < refined.size(); ++i) s += std::abs(refined[i] - raw_labels[i]);
  return s / static_cast<double>(refined.size());
}

Var reconstruction_loss(const Var& x_hat, const Tensor& x, const Var& head, const Tensor& refined, double beta) {
  Tape& t = *x_hat.tape();
  if (x.size() != x_hat.value().size() || x.dim(0) != x_hat.shape()[0])
    throw ShapeError("reconstruction_loss: batch " + shape_str(x.shape()) + " vs reconstruction " +
                     shape_str(x_hat.shape()));
  if (refined.shape() != head.shape())
    throw ShapeError("reconstruction_loss: targets " + shape_str(refined.shape()) + " vs head " +
                     shape_str(head.shape()));
  if (refined.dim(0) != x.dim(0))
    throw ShapeError("reconstruction_loss: " + std::to_string(refined.dim(0)) + " targets for " +
                     std::to_string(x.dim(0)) + " samples");
  const double inv_b = 1.0 / static_cast<double>(x.dim(0));
  Var rec = ops::sum_squares(ops::sub(x_hat, t.constant(x.reshaped(x_hat.shape()))));
  if (beta != 0.0) {
    Var lab = ops::sum_squares(ops::sub(head, t.constant(refined)));
    rec = ops::add(rec, ops::scale(lab, beta));
  }
  return ops::scale(rec, inv_b);
}

double entropy_term(const FuzzyState& state) {
  state.validate();
  const std::size_t M = state.mu.dim(0), k = state.mu.dim(1);
  double dev = 0.0;
  for (std::size_t i = 0; i < M; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += state.mu.at(i, j);
    dev += 1.0 - s;
  }
  double ent = 0.0;
  for (std::size_t i = 0; i < state.wmat.size(); ++i) {
    const double w = state.wmat[i];
    if (!(w > 0.0)) throw std::invalid_argument("entropy_term: weights must be positive");
    ent += w * std::log(w);
  }
  return state.lambda1 * dev + state.lambda2 * ent;
}

ClusteringLoss clustering_loss(const Var& decoded, const Tensor& x, const FuzzyState& state) {
  state.validate();
  Tape& t = *decoded.tape();
  const std::size_t B = x.dim(0), k = decoded.shape()[0];
  const std::size_t D = x.size() / B;
  if (decoded.value().size() != k * D)
    throw ShapeError("clustering_loss: decoded centroids " + shape_str(decoded.shape()) + " vs samples " +
                     shape_str(x.shape()));
  if (state.mu.shape() != Shape{B, k})
    throw ShapeError("clustering_loss: memberships " + shape_str(state.mu.shape()) + " for " + std::to_string(B) +
                     " samples and " + std::to_string(k) + " clusters");
  Var flat = decoded.shape().size() == 2 ? decoded : ops::reshape(decoded, {k, D});
  Var dist = ops::pairwise_sq_dist(t.constant(x.reshaped({B, D})), flat);
  Tensor weights(state.mu.shape());
  for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = std::pow(state.mu[i], state.m);
  ClusteringLoss out;
  out.entropy = entropy_term(state);
  out.distances = dist.value();
  Var total = ops::add(ops::weighted_sum(dist, weights), t.constant(Tensor::scalar(out.entropy)));
  out.loss = ops::scale(total, 1.0 / static_cast<double>(B));
  return out;
}

Tensor raw_membership(const Tensor& distances, double m, double lambda1) {
  require_rank2("raw_membership", distances);
  if (!(m > 1.0)) throw std::invalid_argument("membership: fuzzifier m must be > 1, got " + std::to_string(m));
  Tensor out(distances.shape());
  const double p = 1.0 / (m - 1.0);
  for (std::size_t i = 0; i < distances.size(); ++i) {
    if (distances[i] < 0.0) throw std::invalid_argument("membership: negative distance");
    out[i] = std::pow(lambda1 / (m * std::max(distances[i], kDistanceFloor)), p);
  }
  return out;
}

const Tensor& update_membership(const Tensor& distances, FuzzyState& state) {
  require_rank2("update_membership", distances);
  if (!(state.m > 1.0))
    throw std::invalid_argument("update_membership: fuzzifier m must be > 1, got " + std::to_string(state.m));
  if (!(state.lambda1 >= 0.0)) throw std::invalid_argument("update_membership: lambda1 must be >= 0");
  const std::size_t M = distances.dim(0), k = distances.dim(1);
  const double p = 1.0 / (state.m - 1.0);
  Tensor mu({M, k});
  // Normalizing (lambda1 / (m l_ij))^p over j leaves l_ij^-p / sum_l l_il^-p;
  // evaluated in log space so large distance ratios do not overflow.
  std::vector<double> logs(k);
  for (std::size_t i = 0; i < M; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
      const double l = distances.at(i, j);
      if (l < 0.0 || std::isnan(l)) throw std::invalid_argument("update_membership: negative or NaN distance");
      logs[j] = -p * std::log(std::max(l, kDistanceFloor));
      mx = std::max(mx, logs[j]);
    }
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += (mu.at(i, j) = std::exp(logs[j] - mx));
    for (std::size_t j = 0; j < k; ++j) mu.at(i, j) /= s;
  }
  state.mu = std::move(mu);
  return state.mu;
}

const Tensor& update_weights(const Tensor& decoded, FuzzyState& state) {
  if (!decoded.all_finite()) throw std::invalid_argument("update_weights: decoded centroids are not finite");
  const std::size_t k = decoded.dim(0);
  const std::size_t D = decoded.size() / k;
  const std::size_t M = state.mu.rank() == 2 ? state.mu.dim(0) : 1;
  std::vector<double> logw(k);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < k; ++j) {
    double s = 0.0;
    for (std::size_t d = 0; d < D; ++d) s += decoded[j * D + d];
    logw[j] = 2.0 * (s / static_cast<double>(D)) - 1.0;
    mx = std::max(mx, logw[j]);
  }
  double z = 0.0;
  for (auto& v : logw) z += (v = std::exp(v - mx));
  Tensor w({M, k});
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = 0; j < k; ++j) w.at(i, j) = logw[j] / z;
  state.wmat = std::move(w);
  return state.wmat;
}

CentroidUpdate update_centroids(const Tensor& z, const Tensor& previous, const FuzzyState& state) {
  require_rank2("update_centroids", z);
  state.validate();
  const std::size_t M = z.dim(0), d = z.dim(1), k = state.mu.dim(1);
  if (state.mu.dim(0) != M)
    throw ShapeError("update_centroids: " + std::to_string(state.mu.dim(0)) + " membership rows for " +
                     std::to_string(M) + " points");
  if (previous.shape() != Shape{k, d})
    throw ShapeError("update_centroids: previous centroids " + shape_str(previous.shape()));
  CentroidUpdate out{Tensor({k, d}), {}};
  std::vector<double> mass(k, 0.0);
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const double w = std::pow(state.mu.at(i, j), state.m);
      mass[j] += w;
      for (std::size_t c = 0; c < d; ++c) out.centroids.at(j, c) += w * z.at(i, c);
    }
  for (std::size_t j = 0; j < k; ++j) {
    if (mass[j] < kDegenerateMass) {
      out.reseeded.push_back(j);
      continue;
    }
    for (std::size_t c = 0; c < d; ++c) out.centroids.at(j, c) /= mass[j];
  }
  for (auto j : out.reseeded) {
    // Farthest point from every centroid other than j.
    double best = -1.0;
    std::size_t pick = 0;
    for (std::size_t i = 0; i < M; ++i) {
      double nearest = std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < k; ++l) {
        if (l == j) continue;
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          const double diff = z.at(i, c) - out.centroids.at(l, c);
          s += diff * diff;
        }
        nearest = std::min(nearest, s);
      }
      if (nearest > best) {
        best = nearest;
        pick = i;
      }
    }
    for (std::size_t c = 0; c < d; ++c) out.centroids.at(j, c) = z.at(pick, c);
  }
  return out;
}

CentroidUpdate alternate(const Tensor& distances, const Tensor& decoded, const Tensor& z, const Tensor& previous,
                         FuzzyState& state) {
  update_membership(distances, state);
  update_weights(decoded, state);
  return update_centroids(z, previous, state);
}

namespace {

Tensor sq_dist(const Tensor& a, const Tensor& b) {
  Tensor out({a.dim(0), b.dim(0)});
  kernels::pairwise_sq_dist(a.data(), b.data(), out.data(), a.dim(0), b.dim(0), a.dim(1));
  return out;
}

Tensor kmeanspp(const Tensor& z, std::size_t k, Rng& rng) {
  const std::size_t M = z.dim(0), d = z.dim(1);
  Tensor c({k, d});
  std::vector<double> nearest(M, std::numeric_limits<double>::infinity());
  std::size_t pick = rng.index(M);
  for (std::size_t j = 0; j < k; ++j) {
    std::copy_n(z.ptr() + pick * d, d, c.ptr() + j * d);
    double total = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
      double s = 0.0;
      for (std::size_t q = 0; q < d; ++q) {
        const double diff = z.at(i, q) - c.at(j, q);
        s += diff * diff;
      }
      nearest[i] = std::min(nearest[i], s);
      total += nearest[i];
    }
    if (total <= 0.0) {
      pick = rng.index(M);
      continue;
    }
    double r = rng.uniform() * total;
    pick = M - 1;
    for (std::size_t i = 0; i < M; ++i) {
      r -= nearest[i];
      if (r < 0.0) {
        pick = i;
        break;
      }
    }
  }
  return c;
}

}  // namespace

FcmResult fcm_fit(const Tensor& z, std::size_t k, double m, std::size_t restarts, std::uint64_t seed,
                  std::size_t max_iter, double tol) {
  require_rank2("fcm_fit", z);
  if (k < 1 || k > z.dim(0)) throw std::invalid_argument("fcm_fit: need 1 <= k <= number of points");
  if (restarts < 1) throw std::invalid_argument("fcm_fit: restarts must be >= 1");
  FcmResult best;
  best.objective = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < restarts; ++r) {
    Rng rng(mix_seed(seed, r));
    FuzzyState st = FuzzyState::uniform(z.dim(0), k, m, 1.0, 0.0);
    Tensor c = kmeanspp(z, k, rng);
    std::size_t it = 0;
    for (; it < max_iter; ++it) {
      update_membership(sq_dist(z, c), st);
      Tensor next = update_centroids(z, c, st).centroids;
      const double shift = max_abs_diff(next, c);
      c = std::move(next);
      if (shift < tol) break;
    }
    const Tensor dist = sq_dist(z, c);
    update_membership(dist, st);
    double obj = 0.0;
    for (std::size_t i = 0; i < dist.size(); ++i) obj += std::pow(st.mu[i], m) * dist[i];
    if (obj < best.objective) best = FcmResult{std::move(c), std::move(st.mu), obj, it};
  }
  return best;
}

}  // namespace dafc::fuzzy
