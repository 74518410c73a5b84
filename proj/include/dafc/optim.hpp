#pragma once

#include <span>
#include <vector>

#include "dafc/autograd.hpp"
#include "dafc/tensor.hpp"

namespace dafc {

/// RMSprop hyperparameters and per-parameter running mean of squared
/// gradients.
struct OptimizerState {
  double lr = 1e-4;
  double decay = 0.9;
  double eps = 1e-8;
  std::vector<Tensor> sq_avg;  // one per parameter, created lazily
};

/// s <- decay*s + (1-decay)*g^2;  p <- p - lr*g/(sqrt(s)+eps), elementwise.
/// params, grads and state.sq_avg are matched by position.
void rmsprop_step(std::span<Tensor> params, std::span<const Tensor> grads, OptimizerState& state);

/// RMSprop over the trainable entries of a parameter list.
class RmsProp {
 public:
  explicit RmsProp(double lr = 1e-4, double decay = 0.9, double eps = 1e-8);

  /// Update every trainable parameter from its grad slot (params without a
  /// gradient are left alone).  The parameter list must not be reordered
  /// between calls.
  void step(std::span<Parameter> params);
  void zero_grad(std::span<Parameter> params) const;

  const OptimizerState& state() const { return state_; }
  double lr() const { return state_.lr; }
  void set_lr(double lr) { state_.lr = lr; }

 private:
  OptimizerState state_;
};

}  // namespace dafc
