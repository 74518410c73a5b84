#pragma once

// Differentiable primitives.  Every op records itself on the tape of its
// first Var argument; all Var arguments must share that tape.

#include <cstddef>

#include "dafc/autograd.hpp"
#include "dafc/rng.hpp"

namespace dafc {

enum class Mode { train, eval };

namespace ops {

Var matmul(const Var& a, const Var& b);
/// x[B,in] * w[in,out] + b[out]
Var linear(const Var& x, const Var& w, const Var& b);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);

Var sum(const Var& a);
Var mean(const Var& a);
/// Sum of squared entries.
Var sum_squares(const Var& a);
/// Sum over all entries of weights * a; weights is a constant.
Var weighted_sum(const Var& a, const Tensor& weights);

Var relu(const Var& x);
/// Row-wise softmax of a rank-2 tensor.
Var softmax_rows(const Var& x);

Var reshape(const Var& x, Shape shape);

/// Cross-correlation (no kernel flip) with zero padding.  x is C×H×W or
/// B×C×H×W; w is Cout×Cin×kH×kW; b is Cout or an invalid Var for no bias.
Var conv2d(const Var& x, const Var& w, const Var& b, std::size_t stride, std::size_t padding);
/// Window maximum; gradient goes to the first maximal element in row-major order.
Var maxpool2d(const Var& x, std::size_t kernel, std::size_t stride);
Var avgpool2d(const Var& x, std::size_t kernel, std::size_t stride);
/// Nearest-neighbour resize of the two trailing dims to out_h × out_w.
Var upsample_nearest(const Var& x, std::size_t out_h, std::size_t out_w);

struct BatchNormConfig {
  double eps = 1e-5;
  double momentum = 0.1;
};

/// Per-channel batch normalization over B×C or B×C×H×W.  Train mode uses
/// batch statistics and updates the running estimates in place; eval mode
/// uses the running estimates.
Var batchnorm(const Var& x, const Var& gamma, const Var& beta, Tensor& running_mean,
              Tensor& running_var, Mode mode, const BatchNormConfig& cfg = {});

/// Inverted dropout; identity in eval mode.
Var dropout(const Var& x, double p, Mode mode, Rng& rng);

/// out[i,j] = ||a_i - b_j||^2 for rows of a[M,D] and b[K,D].
Var pairwise_sq_dist(const Var& a, const Var& b);

}  // namespace ops
}  // namespace dafc
