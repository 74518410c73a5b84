#include "dafc/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace dafc {

void rmsprop_step(std::span<Tensor> params, std::span<const Tensor> grads, OptimizerState& state) {
  if (params.size() != grads.size())
    throw ShapeError("rmsprop_step: " + std::to_string(params.size()) + " params but " +
                     std::to_string(grads.size()) + " gradients");
  if (state.sq_avg.empty())
    for (const auto& p : params) state.sq_avg.emplace_back(p.shape());
  if (state.sq_avg.size() != params.size())
    throw ShapeError("rmsprop_step: optimizer state holds " + std::to_string(state.sq_avg.size()) +
                     " slots for " + std::to_string(params.size()) + " params");
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k];
    const Tensor& g = grads[k];
    Tensor& s = state.sq_avg[k];
    if (g.shape() != p.shape() || s.shape() != p.shape())
      throw ShapeError("rmsprop_step: shape mismatch for param " + std::to_string(k) + ": " +
                       shape_str(p.shape()) + " vs grad " + shape_str(g.shape()));
    for (std::size_t i = 0; i < p.size(); ++i) {
      s[i] = state.decay * s[i] + (1.0 - state.decay) * g[i] * g[i];
      p[i] -= state.lr * g[i] / (std::sqrt(s[i]) + state.eps);
    }
  }
}

RmsProp::RmsProp(double lr, double decay, double eps) {
  if (!(lr > 0.0)) throw std::invalid_argument("RmsProp: learning rate must be positive");
  if (!(decay > 0.0 && decay < 1.0)) throw std::invalid_argument("RmsProp: decay must lie in (0,1)");
  if (!(eps >= 0.0)) throw std::invalid_argument("RmsProp: eps must be nonnegative");
  state_.lr = lr;
  state_.decay = decay;
  state_.eps = eps;
}

void RmsProp::step(std::span<Parameter> params) {
  if (state_.sq_avg.empty())
    for (const auto& p : params) state_.sq_avg.emplace_back(p.value.shape());
  if (state_.sq_avg.size() != params.size())
    throw ShapeError("RmsProp::step: parameter list changed size between steps");
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = params[k];
    if (!p.trainable || p.grad.shape() != p.value.shape()) continue;
    Tensor& s = state_.sq_avg[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      s[i] = state_.decay * s[i] + (1.0 - state_.decay) * g * g;
      p.value[i] -= state_.lr * g / (std::sqrt(s[i]) + state_.eps);
    }
  }
}

void RmsProp::zero_grad(std::span<Parameter> params) const {
  for (auto& p : params)
    if (p.trainable) p.zero_grad();
}

}  // namespace dafc
