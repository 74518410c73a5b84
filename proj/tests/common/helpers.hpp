#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "dafc/autograd.hpp"
#include "dafc/ops.hpp"
#include "dafc/rng.hpp"
#include "dafc/tensor.hpp"

namespace testing {

using dafc::Rng;
using dafc::Shape;
using dafc::Tape;
using dafc::Tensor;
using dafc::Var;

inline Tensor random_tensor(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(s);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Values bounded away from zero so ReLU kinks are not straddled by a
// finite-difference step.
inline Tensor random_away_from_zero(const Shape& s, Rng& rng) {
  Tensor t(s);
  for (auto& v : t.data()) {
    const double mag = rng.uniform(0.05, 1.0);
    v = rng.bernoulli(0.5) ? mag : -mag;
  }
  return t;
}

inline double rel_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-4});
}

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Largest relative error between the tape gradient of sum(R ⊙ f(inputs))
/// and central differences (step h) over every input element.
inline double gradcheck(const std::vector<Tensor>& inputs, const Builder& f, std::uint64_t seed = 7,
                        double h = 1e-5) {
  Tensor weights;
  auto loss_of = [&](const std::vector<Tensor>& in, std::vector<Tensor>* grads) {
    Tape t;
    std::vector<Var> leaves;
    for (const auto& x : in) leaves.push_back(t.leaf(x));
    Var out = f(t, leaves);
    if (weights.empty()) {
      Rng r(seed);
      weights = random_tensor(out.shape(), r);
    }
    Var loss = dafc::ops::weighted_sum(out, weights);
    if (grads) {
      t.backward(loss);
      for (const auto& l : leaves) {
        const Tensor& g = t.grad(l);
        grads->push_back(g.empty() ? Tensor(l.shape()) : g);
      }
    }
    return loss.value().item();
  };
  std::vector<Tensor> analytic;
  loss_of(inputs, &analytic);
  double worst = 0.0;
  std::vector<Tensor> probe = inputs;
  for (std::size_t a = 0; a < inputs.size(); ++a)
    for (std::size_t i = 0; i < inputs[a].size(); ++i) {
      probe[a][i] = inputs[a][i] + h;
      const double up = loss_of(probe, nullptr);
      probe[a][i] = inputs[a][i] - h;
      const double down = loss_of(probe, nullptr);
      probe[a][i] = inputs[a][i];
      worst = std::max(worst, rel_error(analytic[a][i], (up - down) / (2.0 * h)));
    }
  return worst;
}

inline bool rows_on_simplex(const Tensor& t, double tol) {
  for (std::size_t r = 0; r < t.dim(0); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < t.dim(1); ++c) {
      if (t.at(r, c) < 0.0) return false;
      s += t.at(r, c);
    }
    if (std::abs(s - 1.0) > tol) return false;
  }
  return true;
}

}  // namespace testing
