#include <cmath>

#include "doctest.h"
#include "dafc/fuzzy.hpp"
#include "helpers.hpp"

using namespace dafc;
using namespace dafc::fuzzy;
using doctest::Approx;
using testing::random_tensor;

namespace {

Tensor random_labels(std::size_t B, std::size_t k, Rng& rng) {
  Tensor y = random_tensor({B, k}, rng, 0.01, 1.0);
  for (std::size_t i = 0; i < B; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < k; ++j) s += y.at(i, j);
    for (std::size_t j = 0; j < k; ++j) y.at(i, j) /= s;
  }
  return y;
}

double loss_value(const Tensor& decoded, const Tensor& x, const FuzzyState& st) {
  Tape t;
  return clustering_loss(t.constant(decoded), x, st).loss.value().item();
}

}  // namespace

TEST_CASE("similarity matrix examples") {
  const Tensor y({3, 2}, {1, 0, 0, 1, 1, 1});
  const Tensor C = similarity_matrix(y);
  CHECK(C.at(0, 0) == Approx(1.0));
  CHECK(C.at(0, 1) == 0.0);
  CHECK(C.at(0, 2) == Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(C.at(2, 0) == C.at(0, 2));
  try {
    similarity_matrix(Tensor({3, 2}, {1, 0, 0, 0, 1, 1}));
    FAIL("zero row accepted");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("row 1") != std::string::npos);
  }
}

TEST_CASE("similarity matrix properties") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t B = 1 + rng.index(8), k = 1 + rng.index(5);
    const Tensor C = similarity_matrix(random_tensor({B, k}, rng, -1, 1));
    for (std::size_t i = 0; i < B; ++i) {
      CHECK(std::abs(C.at(i, i) - 1.0) <= 1e-9);
      for (std::size_t j = 0; j < B; ++j) {
        CHECK(std::abs(C.at(i, j) - C.at(j, i)) <= 1e-12);
        CHECK(C.at(i, j) >= -1.0);
        CHECK(C.at(i, j) <= 1.0);
      }
    }
  }
}

TEST_CASE("pseudo-label refinement examples") {
  const Tensor Y({2, 2}, {1, 0, 0.6, 0.4});
  const Tensor C({2, 2}, {1, 0.9, 0.9, 1});
  const Tensor r = refine_pseudo_labels(Y, C, 0.8);
  CHECK(r.at(0, 0) == Approx(1.54 / 1.9).epsilon(1e-12));
  CHECK(r.at(0, 0) == Approx(0.8105).epsilon(1e-4));
  CHECK(r.at(0, 1) == Approx(0.1895).epsilon(1e-3));

  Rng rng(2);
  const Tensor Yr = random_labels(6, 3, rng);
  const Tensor Cr = similarity_matrix(Yr);
  double max_off = -1.0;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      if (i != j) max_off = std::max(max_off, Cr.at(i, j));
  REQUIRE(max_off < 0.999999);
  const Tensor iso = refine_pseudo_labels(Yr, Cr, max_off + 1e-9);
  for (std::size_t i = 0; i < iso.size(); ++i) CHECK(iso[i] == Approx(Yr[i]).epsilon(1e-15));

  Tensor twins({2, 3}, {0.2, 0.3, 0.5, 0.2, 0.3, 0.5});
  for (double eps : {0.1, 0.5, 0.99}) {
    const Tensor rt = refine_pseudo_labels(twins, similarity_matrix(twins), eps);
    for (std::size_t i = 0; i < rt.size(); ++i) CHECK(rt[i] == Approx(twins[i]).epsilon(1e-12));
  }

  CHECK_THROWS_AS(refine_pseudo_labels(Y, C, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(refine_pseudo_labels(Y, C, 1.0), std::invalid_argument);
}

TEST_CASE("refined labels are on the simplex and the summary reports the change") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t B = 1 + rng.index(10), k = 2 + rng.index(4);
    const auto batch = PseudoLabelBatch::build(random_labels(B, k, rng), rng.uniform(0.05, 0.95));
    CHECK(testing::rows_on_simplex(batch.refined, 1e-12));
    CHECK(batch.mean_refinement() >= 0.0);
  }
  const auto same = PseudoLabelBatch::build(Tensor({2, 2}, {1, 0, 0, 1}), 0.9);
  CHECK(same.mean_refinement() == 0.0);
}

TEST_CASE("reconstruction loss examples") {
  Tape t;
  {
    Var xh = t.constant(Tensor({1, 1}, {0.5}));
    Var head = t.constant(Tensor({1, 2}, {1, 0}));
    const Var l = reconstruction_loss(xh, Tensor({1, 1}, {1.0}), head, Tensor({1, 2}, {0.5, 0.5}), 1.0);
    CHECK(l.value().item() == Approx(0.75).epsilon(1e-15));
    const Var l0 = reconstruction_loss(xh, Tensor({1, 1}, {1.0}), head, Tensor({1, 2}, {0.5, 0.5}), 0.0);
    CHECK(l0.value().item() == Approx(0.25).epsilon(1e-15));
  }
  {
    Rng rng(4);
    const Tensor x = random_tensor({3, 1, 2, 2}, rng);
    const Tensor y = random_labels(3, 2, rng);
    CHECK(reconstruction_loss(t.constant(x), x, t.constant(y), y, 1.0).value().item() == 0.0);
    CHECK_THROWS(reconstruction_loss(t.constant(x), x, t.constant(y), random_labels(2, 2, rng), 1.0));
    CHECK_THROWS(reconstruction_loss(t.constant(Tensor({2, 4})), x, t.constant(y), y, 1.0));
  }
}

TEST_CASE("entropy term examples") {
  FuzzyState st = FuzzyState::uniform(1, 2, 2.0, 0.5, 0.5);
  CHECK(entropy_term(st) == Approx(-0.5 * std::log(2.0)).epsilon(1e-12));
  CHECK(entropy_term(st) == Approx(-0.3466).epsilon(1e-4));
  st.lambda1 = st.lambda2 = 0.0;
  CHECK(entropy_term(st) == 0.0);
  FuzzyState off = FuzzyState::uniform(2, 2, 2.0, 1.0, 0.0);
  off.mu = Tensor({2, 2}, {0.2, 0.3, 0.5, 0.5});
  CHECK(entropy_term(off) == Approx(0.5).epsilon(1e-12));
  FuzzyState bad = FuzzyState::uniform(1, 2);
  bad.wmat = Tensor({1, 2}, {1.0, 0.0});
  CHECK_THROWS(entropy_term(bad));
}

TEST_CASE("clustering loss examples") {
  SUBCASE("perfect match") {
    FuzzyState st = FuzzyState::uniform(2, 2, 3.0, 0.0, 0.0);
    st.mu = Tensor({2, 2}, {1, 0, 0, 1});
    const Tensor dec({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(loss_value(dec, dec, st) == 0.0);
  }
  SUBCASE("single term") {
    FuzzyState st = FuzzyState::uniform(1, 1, 2.0, 0.0, 0.0);
    const Tensor dec({1, 2}, {0.0, 0.0});
    const Tensor x({1, 2}, {std::sqrt(0.5), std::sqrt(0.3)});
    CHECK(loss_value(dec, x, st) == Approx(0.8).epsilon(1e-12));
  }
  SUBCASE("linear in the distances") {
    Rng rng(5);
    FuzzyState st = FuzzyState::uniform(4, 3, 2.0, 0.0, 0.0);
    st.mu = random_labels(4, 3, rng);
    const Tensor dec = random_tensor({3, 5}, rng), x = random_tensor({4, 5}, rng);
    Tensor dec2 = dec, x2 = x;
    for (auto& v : dec2.data()) v *= std::sqrt(2.0);
    for (auto& v : x2.data()) v *= std::sqrt(2.0);
    CHECK(loss_value(dec2, x2, st) == Approx(2.0 * loss_value(dec, x, st)).epsilon(1e-12));
  }
  SUBCASE("entropy enters once per batch and distances are exposed") {
    Rng rng(6);
    FuzzyState st = FuzzyState::uniform(3, 2);
    const Tensor dec = random_tensor({2, 4}, rng), x = random_tensor({3, 4}, rng);
    Tape t;
    const auto cl = clustering_loss(t.constant(dec), x, st);
    double direct = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 2; ++j) {
        double l = 0.0;
        for (std::size_t c = 0; c < 4; ++c) l += std::pow(x.at(i, c) - dec.at(j, c), 2);
        CHECK(cl.distances.at(i, j) == Approx(l).epsilon(1e-12));
        direct += 0.25 * l;
      }
    CHECK(cl.loss.value().item() == Approx((direct + entropy_term(st)) / 3.0).epsilon(1e-12));
  }
  SUBCASE("gradient reaches the decoded centroids") {
    Rng rng(7);
    FuzzyState st = FuzzyState::uniform(3, 2);
    st.mu = random_labels(3, 2, rng);
    const Tensor x = random_tensor({3, 4}, rng);
    const double err = testing::gradcheck({random_tensor({2, 4}, rng)}, [&](Tape&, const std::vector<Var>& v) {
      return clustering_loss(v[0], x, st).loss;
    });
    CHECK(err < 1e-6);
  }
}

TEST_CASE("membership update examples") {
  FuzzyState st = FuzzyState::uniform(1, 2, 2.0, 0.5, 0.5);
  update_membership(Tensor({1, 2}, {0.25, 1.0}), st);
  CHECK(st.mu.at(0, 0) == Approx(0.8).epsilon(1e-12));
  CHECK(st.mu.at(0, 1) == Approx(0.2).epsilon(1e-12));
  const Tensor raw = raw_membership(Tensor({1, 2}, {0.25, 1.0}), 2.0, 0.5);
  CHECK(raw.at(0, 0) == Approx(1.0).epsilon(1e-12));
  CHECK(raw.at(0, 1) == Approx(0.25).epsilon(1e-12));

  FuzzyState flat = FuzzyState::uniform(1, 3, 3.0, 0.9, 0.5);
  const double l = 0.9 / 3.0;
  CHECK(raw_membership(Tensor({1, 3}, l), 3.0, 0.9) == Tensor({1, 3}, 1.0));
  update_membership(Tensor({1, 3}, l), flat);
  for (double v : flat.mu.data()) CHECK(v == Approx(1.0 / 3.0).epsilon(1e-12));

  // A zero distance is floored, so the point belongs almost surely to that cluster.
  FuzzyState z = FuzzyState::uniform(1, 2);
  update_membership(Tensor({1, 2}, {0.0, 1.0}), z);
  CHECK(z.mu.at(0, 0) > 1.0 - 1e-9);
  CHECK(z.mu.at(0, 1) > 0.0);

  FuzzyState bad = FuzzyState::uniform(1, 2);
  CHECK_THROWS(update_membership(Tensor({1, 2}, {-1.0, 1.0}), bad));
  bad.m = 1.0;
  CHECK_THROWS(update_membership(Tensor({1, 2}, {1.0, 1.0}), bad));
}

TEST_CASE("membership update properties") {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t M = 1 + rng.index(6), k = 2 + rng.index(5);
    const double m = 1.1 + rng.uniform(0, 3), lambda1 = rng.uniform(0.01, 2);
    FuzzyState st = FuzzyState::uniform(M, k, m, lambda1, 0.5);
    const Tensor d = random_tensor({M, k}, rng, 0.0, 10.0);
    update_membership(d, st);
    CHECK(testing::rows_on_simplex(st.mu, 1e-9));
    for (double v : st.mu.data()) CHECK(v > 0.0);

    // Raw memberships fall as a distance grows.
    const Tensor raw = raw_membership(d, m, lambda1);
    Tensor bumped = d;
    const std::size_t i = rng.index(bumped.size());
    bumped[i] += rng.uniform(0.01, 1.0);
    CHECK(raw_membership(bumped, m, lambda1)[i] < raw[i]);

    // Scaling a row leaves its normalized memberships unchanged.
    Tensor scaled = d;
    const double s = rng.uniform(0.1, 10.0);
    for (auto& v : scaled.data()) v *= s;
    FuzzyState st2 = st;
    update_membership(scaled, st2);
    for (std::size_t e = 0; e < st.mu.size(); ++e) CHECK(st2.mu[e] == Approx(st.mu[e]).epsilon(1e-12));
  }
}

TEST_CASE("weight update examples") {
  FuzzyState st = FuzzyState::uniform(3, 2);
  update_weights(Tensor({2, 4}, {1, 1, 1, 1, 0.25, 0.75, 0.5, 0.5}), st);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(st.wmat.at(i, 0) == Approx(std::exp(1.0) / (std::exp(1.0) + 1.0)).epsilon(1e-12));
    CHECK(st.wmat.at(i, 0) == Approx(0.7311).epsilon(1e-4));
    CHECK(st.wmat.at(i, 1) == Approx(0.2689).epsilon(1e-4));
  }
  FuzzyState half = FuzzyState::uniform(2, 4);
  update_weights(Tensor({4, 3}, 0.5), half);
  for (double v : half.wmat.data()) CHECK(v == Approx(0.25).epsilon(1e-12));

  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t M = 1 + rng.index(5), k = 2 + rng.index(4);
    FuzzyState s = FuzzyState::uniform(M, k);
    update_weights(random_tensor({k, 6}, rng, -5, 5), s);
    CHECK(testing::rows_on_simplex(s.wmat, 1e-9));
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        CHECK(s.wmat.at(i, j) > 0.0);
        CHECK(s.wmat.at(i, j) == s.wmat.at(0, j));
      }
  }
  Tensor inf({2, 1}, {1.0, std::numeric_limits<double>::infinity()});
  CHECK_THROWS(update_weights(inf, st));
}

TEST_CASE("centroid update examples") {
  FuzzyState st = FuzzyState::uniform(2, 2);
  st.mu = Tensor({2, 2}, {0.8, 0.2, 0.2, 0.8});
  const auto up = update_centroids(Tensor({2, 1}, {0.0, 1.0}), Tensor({2, 1}), st);
  CHECK(up.centroids.at(0, 0) == Approx(0.04 / 0.68).epsilon(1e-12));
  CHECK(up.centroids.at(0, 0) == Approx(0.0588).epsilon(1e-3));
  CHECK(up.reseeded.empty());

  FuzzyState hard = FuzzyState::uniform(4, 2, 3.0);
  hard.mu = Tensor({4, 2}, {1, 0, 1, 0, 0, 1, 0, 1});
  const Tensor z({4, 2}, {0, 0, 2, 2, 10, 10, 12, 14});
  const auto h = update_centroids(z, Tensor({2, 2}), hard);
  CHECK(h.centroids.vec() == std::vector<double>{1, 1, 11, 12});

  FuzzyState uni = FuzzyState::uniform(4, 2);
  const auto u = update_centroids(z, Tensor({2, 2}), uni);
  CHECK(u.centroids.at(0, 0) == Approx(6.0));
  CHECK(u.centroids.at(1, 1) == Approx(6.5));
}

TEST_CASE("an empty cluster is re-seeded at the farthest point") {
  FuzzyState st = FuzzyState::uniform(3, 2);
  st.mu = Tensor({3, 2}, {1, 0, 1, 0, 1, 0});
  const Tensor z({3, 1}, {0.0, 1.0, 9.0});
  const auto up = update_centroids(z, Tensor({2, 1}, {0.0, 5.0}), st);
  REQUIRE(up.reseeded == std::vector<std::size_t>{1});
  CHECK(up.centroids.at(0, 0) == Approx(10.0 / 3.0));
  CHECK(up.centroids.at(1, 0) == 9.0);
}

TEST_CASE("one alternation with identity maps is one fuzzy c-means step") {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t M = 3 + rng.index(10), k = 2 + rng.index(3), D = 1 + rng.index(4);
    const Tensor x = random_tensor({M, D}, rng, -3, 3);
    const Tensor c = random_tensor({k, D}, rng, -3, 3);
    FuzzyState st = FuzzyState::uniform(M, k, 2.0, 0.0, 0.0);
    Tape t;
    const auto cl = clustering_loss(t.constant(c), x, st);
    const auto up = alternate(cl.distances, c, x, c, st);

    // Textbook fuzzy c-means with m = 2.
    Tensor u({M, k});
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        double dij = 0, s = 0;
        for (std::size_t a = 0; a < D; ++a) dij += std::pow(x.at(i, a) - c.at(j, a), 2);
        for (std::size_t l = 0; l < k; ++l) {
          double dil = 0;
          for (std::size_t a = 0; a < D; ++a) dil += std::pow(x.at(i, a) - c.at(l, a), 2);
          s += dij / dil;
        }
        u.at(i, j) = 1.0 / s;
      }
    for (std::size_t e = 0; e < u.size(); ++e) CHECK(std::abs(st.mu[e] - u[e]) < 1e-9);
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t a = 0; a < D; ++a) {
        double num = 0, den = 0;
        for (std::size_t i = 0; i < M; ++i) {
          num += u.at(i, j) * u.at(i, j) * x.at(i, a);
          den += u.at(i, j) * u.at(i, j);
        }
        CHECK(std::abs(up.centroids.at(j, a) - num / den) < 1e-9);
      }
  }
}

TEST_CASE("fcm_fit separates well spaced groups") {
  Rng rng(11);
  Tensor z({60, 2});
  for (std::size_t i = 0; i < 60; ++i) {
    z.at(i, 0) = static_cast<double>(i % 3) * 10.0 + rng.normal(0, 0.3);
    z.at(i, 1) = rng.normal(0, 0.3);
  }
  const auto fit = fcm_fit(z, 3, 2.0, 3, 1);
  CHECK(testing::rows_on_simplex(fit.mu, 1e-9));
  for (std::size_t i = 0; i < 60; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < 3; ++j)
      if (fit.mu.at(i, j) > fit.mu.at(i, best)) best = j;
    std::size_t ref = 0;
    for (std::size_t j = 1; j < 3; ++j)
      if (fit.mu.at(i % 3, j) > fit.mu.at(i % 3, ref)) ref = j;
    CHECK(best == ref);
  }
  const auto again = fcm_fit(z, 3, 2.0, 3, 1);
  CHECK(again.centroids == fit.centroids);
  CHECK_THROWS(fcm_fit(z, 61, 2.0, 1, 0));
  CHECK_THROWS(fcm_fit(z, 3, 2.0, 0, 0));
}

TEST_CASE("fuzzy state rows and validation") {
  FuzzyState st = FuzzyState::uniform(4, 3);
  st.mu.at(2, 0) = 0.5;
  st.mu.at(2, 1) = 0.25;
  st.mu.at(2, 2) = 0.25;
  const std::vector<std::size_t> idx{2, 0};
  const FuzzyState sub = st.rows(idx);
  CHECK(sub.mu.shape() == Shape{2, 3});
  CHECK(sub.mu.at(0, 0) == 0.5);
  CHECK(sub.m == st.m);
  FuzzyState bad = st;
  bad.m = 0.5;
  CHECK_THROWS(bad.validate());
  bad = st;
  bad.lambda2 = -1;
  CHECK_THROWS(bad.validate());
}
