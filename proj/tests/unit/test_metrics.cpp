#include "doctest.h"
#include "dafc/metrics.hpp"
#include "dafc/rng.hpp"
#include "oracles.hpp"

using namespace dafc::metrics;
using doctest::Approx;

namespace {

LabelPair pair_of(std::vector<int> p, std::vector<int> t) { return LabelPair::make(std::move(p), std::move(t)); }

LabelPair random_pair(dafc::Rng& rng, std::size_t max_n, std::size_t max_k) {
  const std::size_t n = 2 + rng.index(max_n - 1);
  const int kp = 1 + static_cast<int>(rng.index(max_k)), kt = 1 + static_cast<int>(rng.index(max_k));
  LabelPair pr;
  pr.k_pred = static_cast<std::size_t>(kp);
  pr.k_truth = static_cast<std::size_t>(kt);
  for (std::size_t i = 0; i < n; ++i) {
    pr.predicted.push_back(static_cast<int>(rng.index(static_cast<std::uint64_t>(kp))));
    pr.truth.push_back(static_cast<int>(rng.index(static_cast<std::uint64_t>(kt))));
  }
  return pr;
}

}  // namespace

TEST_CASE("contingency examples") {
  const auto a = contingency(pair_of({0, 0, 1}, {0, 0, 1}));
  CHECK(a.table == std::vector<std::size_t>{2, 0, 0, 1});
  const auto b = contingency(pair_of({0, 1, 0, 1}, {0, 0, 1, 1}));
  CHECK(b.table == std::vector<std::size_t>{1, 1, 1, 1});
  CHECK(b.row_sums == std::vector<std::size_t>{2, 2});
  const auto c = contingency(pair_of({0}, {0}));
  CHECK(c.table == std::vector<std::size_t>{1});
  CHECK(c.total == 1);

  CHECK_THROWS(contingency(pair_of({0, 1}, {0})));
  CHECK_THROWS(contingency(pair_of({}, {})));
  LabelPair bad{{0, 3}, {0, 1}, 2, 2};
  CHECK_THROWS(contingency(bad));
  LabelPair neg{{0, -1}, {0, 1}, 2, 2};
  CHECK_THROWS(contingency(neg));
}

TEST_CASE("accuracy examples") {
  CHECK(accuracy(pair_of({2, 2, 0, 1}, {0, 0, 1, 2})) == 1.0);
  CHECK(accuracy(pair_of({0, 0, 0, 0}, {0, 0, 1, 1})) == 0.5);
  CHECK(accuracy(pair_of({0, 1, 2, 2}, {0, 0, 1, 1})) == 0.75);
}

TEST_CASE("ari examples") {
  CHECK(ari(pair_of({0, 1, 1, 2}, {0, 1, 1, 2})) == 1.0);
  CHECK(ari(pair_of({0, 0, 1, 1}, {1, 1, 0, 0})) == 1.0);
  CHECK(ari(pair_of({0, 1, 0, 1}, {0, 0, 1, 1})) == Approx(-0.5).epsilon(1e-15));
  CHECK(ari(pair_of({0, 0, 0}, {0, 0, 0})) == 1.0);
  CHECK_THROWS(ari(pair_of({0}, {0})));
}

TEST_CASE("nmi examples") {
  CHECK(nmi(pair_of({0, 0, 1, 1}, {1, 1, 0, 0})) == Approx(1.0).epsilon(1e-15));
  CHECK(nmi(pair_of({0, 0, 1, 1}, {0, 1, 0, 1})) == Approx(0.0).epsilon(1e-15));
  CHECK(nmi(pair_of({0, 0, 0, 1}, {0, 0, 1, 1})) == Approx(0.3437).epsilon(1e-3));
  CHECK(nmi(pair_of({0, 0, 0}, {1, 1, 1})) == 0.0);
}

TEST_CASE("metrics agree with brute-force oracles") {
  dafc::Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const LabelPair p = random_pair(rng, 50, 6);
    const int kp = static_cast<int>(p.k_pred), kt = static_cast<int>(p.k_truth);
    CHECK(std::abs(accuracy(p) - oracle::exhaustive_accuracy(p.predicted, p.truth, kp, kt)) <= 1e-12);
    CHECK(std::abs(ari(p) - oracle::pairwise_ari(p.predicted, p.truth)) <= 1e-12);
    CHECK(std::abs(nmi(p) - oracle::entropy_nmi(p.predicted, p.truth)) <= 1e-12);
  }
}

TEST_CASE("metrics are invariant under relabeling and accuracy has a matched-cell floor") {
  dafc::Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    LabelPair p = random_pair(rng, 40, 6);
    std::vector<int> perm(p.k_pred);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
    LabelPair q = p;
    for (auto& v : q.predicted) v = perm[static_cast<std::size_t>(v)];
    const Scores a = score_all(p), b = score_all(q);
    CHECK(a.acc == b.acc);
    CHECK(std::abs(a.ari - b.ari) <= 1e-12);
    CHECK(std::abs(a.nmi - b.nmi) <= 1e-12);

    // Any single matched cell is a feasible assignment, so accuracy is at
    // least the largest cell; with one predicted cluster it is exactly the
    // majority class share.
    const Contingency c = contingency(p);
    const double n = static_cast<double>(c.total);
    CHECK(a.acc >= static_cast<double>(*std::max_element(c.table.begin(), c.table.end())) / n);
    if (c.rows == 1)
      CHECK(a.acc == static_cast<double>(*std::max_element(c.col_sums.begin(), c.col_sums.end())) / n);
    CHECK(a.acc <= 1.0);
    CHECK(a.ari >= -1.0);
    CHECK(a.ari <= 1.0);
    CHECK(a.nmi >= 0.0);
    CHECK(a.nmi <= 1.0);
  }
}

TEST_CASE("assignment solver handles rectangular inputs") {
  const std::vector<double> w{5, 1, 1, 4, 3, 3};  // 3 rows × 2 cols
  const auto m = max_weight_assignment(w, 3, 2);
  CHECK(m[0] == 0);
  CHECK(m[1] == 1);
  CHECK(m[2] == -1);
  const std::vector<double> wide{1, 9, 2, 8, 3, 7};  // 2 rows × 3 cols
  const auto n = max_weight_assignment(wide, 2, 3);
  CHECK(wide[0 * 3 + n[0]] + wide[1 * 3 + n[1]] == 17);
  CHECK(argmax_rows(std::vector<double>{0.1, 0.7, 0.2, 0.5, 0.5, 0.0}, 2, 3) == std::vector<int>{1, 0});
}
