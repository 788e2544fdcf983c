#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "edgetune/tensor.hpp"

namespace edgetune {

// Reverse-mode tape. Nodes are appended in forward order; backward() visits
// them in strict reverse append order and accumulates gradients with a fixed
// += ordering, so replaying the same tape is bit-reproducible. A Tape is
// confined to one logical thread.
template <typename S>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor<S>& out_grad)>;

  // Register a leaf (trainable parameter or watched input).
  int watch(Tensor<S>& t) {
    int id = push_leaf();
    t.attach(this, id);
    return id;
  }

  int push_leaf() {
    nodes_.push_back(Node{});
    return static_cast<int>(nodes_.size()) - 1;
  }

  int push_op(BackwardFn fn) {
    nodes_.push_back(Node{std::move(fn)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::size_t size() const { return nodes_.size(); }

  void accumulate(int node, const Tensor<S>& contribution) {
    auto& g = grads_.at(static_cast<std::size_t>(node));
    if (!g.defined()) {
      g = contribution.clone();
    } else {
      if (g.shape() != contribution.shape())
        throw ShapeError("gradient shape mismatch: " + shape_str(g.shape()) + " vs " +
                         shape_str(contribution.shape()));
      g.vec_mut() += contribution.vec();
    }
  }

  // Run reverse accumulation from a scalar loss. Gradients from any earlier
  // backward() call are discarded first.
  void run_backward(const Tensor<S>& loss) {
    if (!loss.on_tape() || loss.tape() != this)
      throw ContractError("backward: loss is not recorded on this tape");
    if (loss.numel() != 1)
      throw ContractError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    grads_.assign(nodes_.size(), Tensor<S>{});
    accumulate(loss.node(), Tensor<S>::ones(loss.shape()));
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      const auto& n = nodes_[static_cast<std::size_t>(i)];
      const auto& g = grads_[static_cast<std::size_t>(i)];
      if (n.backward && g.defined()) n.backward(*this, g);
    }
  }

  // Gradient of a watched tensor; zeros if the parameter was never reached.
  Tensor<S> grad(const Tensor<S>& t) const {
    if (!t.on_tape() || t.tape() != this)
      throw ContractError("grad: tensor is not attached to this tape");
    const auto& g = grads_.at(static_cast<std::size_t>(t.node()));
    return g.defined() ? g : Tensor<S>::zeros(t.shape());
  }

  void clear() {
    nodes_.clear();
    grads_.clear();
  }

 private:
  struct Node {
    BackwardFn backward;  // empty for leaves
  };
  std::vector<Node> nodes_;
  std::vector<Tensor<S>> grads_;
};

// Read-only view of the gradients of one backward pass.
template <typename S>
class GradMap {
 public:
  explicit GradMap(Tape<S>& tape) : tape_(&tape) {}
  Tensor<S> at(const Tensor<S>& param) const { return tape_->grad(param); }

 private:
  Tape<S>* tape_;
};

template <typename S>
GradMap<S> backward(const Tensor<S>& loss, Tape<S>& tape) {
  tape.run_backward(loss);
  return GradMap<S>(tape);
}

}  // namespace edgetune
