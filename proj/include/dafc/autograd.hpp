#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dafc/tensor.hpp"

namespace dafc {

/// A named trainable (or buffer) tensor with its gradient slot.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;  // same shape as value once allocated
  bool trainable = true;

  void zero_grad();
};

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* t, std::size_t id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

struct BackwardReport {
  /// Parameters bound to the tape that the loss does not depend on.
  std::vector<std::string> detached;
};

/// Records primitive applications in execution order (which is a topological
/// order by construction) and replays them in reverse for gradients.
class Tape {
 public:
  /// Called during backward with the gradient of the node's output.
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor t);
  /// Free leaf whose gradient can be read back with grad().
  Var leaf(Tensor t);
  /// Leaf bound to a Parameter; backward() adds into p.grad.  Binding the same
  /// parameter twice returns the same node.
  Var parameter(Parameter& p);

  /// Register an op result.  fn may be empty when no input needs a gradient.
  Var record(std::string op, Tensor value, const std::vector<Var>& inputs, BackwardFn fn);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(const Var& v) const { return nodes_.at(v.id()).requires_grad; }
  /// Gradient buffer of a node; zero-filled on first access.
  Tensor& grad_buffer(std::size_t id);
  /// Gradient after backward(); empty tensor if none flowed.
  const Tensor& grad(const Var& v) const { return nodes_.at(v.id()).grad; }

  /// Accumulate d(loss)/d(node) for every node reachable from loss.
  /// Throws ShapeError if loss is not a single element.
  BackwardReport backward(const Var& loss);

  std::size_t size() const { return nodes_.size(); }
  const std::string& op_name(std::size_t id) const { return nodes_.at(id).op; }

 private:
  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };
  Var push(Node n);

  std::vector<Node> nodes_;
  std::unordered_map<Parameter*, std::size_t> bound_;
};

}  // namespace dafc
