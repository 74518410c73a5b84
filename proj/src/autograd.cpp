#include "dafc/autograd.hpp"

#include <algorithm>

namespace dafc {

void Parameter::zero_grad() {
  if (grad.shape() != value.shape())
    grad = Tensor(value.shape());
  else
    grad.fill(0.0);
}

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor t) {
  Node n;
  n.op = "constant";
  n.value = std::move(t);
  return push(std::move(n));
}

Var Tape::leaf(Tensor t) {
  Node n;
  n.op = "leaf";
  n.value = std::move(t);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::parameter(Parameter& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return Var(this, it->second);
  Node n;
  n.op = "param:" + p.name;
  n.value = p.value;
  n.requires_grad = p.trainable;
  n.param = &p;
  Var v = push(std::move(n));
  bound_.emplace(&p, v.id());
  return v;
}

Var Tape::record(std::string op, Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
  Node n;
  n.op = std::move(op);
  n.value = std::move(value);
  n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                [this](const Var& v) { return nodes_.at(v.id()).requires_grad; });
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_.at(id);
  if (n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

BackwardReport Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw std::invalid_argument("backward: loss belongs to another tape");
  const Node& ln = nodes_.at(loss.id());
  if (ln.value.size() != 1)
    throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(ln.value.shape()));
  BackwardReport report;
  if (!ln.requires_grad) {
    for (auto& [p, id] : bound_)
      if (p->trainable) report.detached.push_back(p->name);
    return report;
  }
  for (auto& n : nodes_) n.grad = Tensor();
  grad_buffer(loss.id())[0] += 1.0;
  // Reverse recording order visits every node once, after all its consumers.
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, n.grad);
  }
  for (auto& [p, id] : bound_) {
    if (!p->trainable) continue;
    const Node& n = nodes_[id];
    if (n.grad.empty() || id > loss.id()) {
      report.detached.push_back(p->name);
      continue;
    }
    if (p->grad.shape() != p->value.shape()) p->grad = Tensor(p->value.shape());
    for (std::size_t k = 0; k < n.grad.size(); ++k) p->grad[k] += n.grad[k];
  }
  std::sort(report.detached.begin(), report.detached.end());
  return report;
}

}  // namespace dafc
