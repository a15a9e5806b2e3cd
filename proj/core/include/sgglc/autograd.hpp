#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "sgglc/tensor.hpp"

namespace sgglc {

// Reverse-mode tape. Ops append nodes in execution order; backward() walks
// the tape in reverse, so recording order doubles as a topological order.
// Gradients accumulate with +=, which handles parameter reuse for free.
template <typename T>
class Graph {
 public:
  using BackFn = std::function<void(Graph&, int)>;

  explicit Graph(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  i64 size() const { return static_cast<i64>(nodes_.size()); }

  int leaf(Tensor<T> value, bool needs_grad) {
    nodes_.push_back(Node{std::move(value), Tensor<T>(), nullptr, needs_grad && recording_});
    return static_cast<int>(nodes_.size()) - 1;
  }

  int record(Tensor<T> value, std::vector<int> parents, BackFn back) {
    bool needs = false;
    if (recording_) {
      for (int p : parents)
        if (node(p).needs_grad) { needs = true; break; }
    }
    nodes_.push_back(Node{std::move(value), Tensor<T>(), needs ? std::move(back) : nullptr, needs});
    return static_cast<int>(nodes_.size()) - 1;
  }

  const Tensor<T>& val(int id) const { return node(id).value; }

  bool needs_grad(int id) const { return node(id).needs_grad; }
  bool has_grad(int id) const { return !node(id).grad.empty(); }

  // Gradient buffer, zero-allocated on first touch.
  Tensor<T>& grad(int id) {
    Node& n = node(id);
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape(), T(0));
    return n.grad;
  }

  void backward(int root, const Tensor<T>& seed) {
    if (!recording_)
      throw Error("backward requires a forward pass recorded with gradients enabled");
    if (root < 0 || root >= static_cast<int>(nodes_.size()))
      throw Error("backward: unknown root node");
    if (seed.shape() != node(root).value.shape())
      throw ShapeError("backward seed dims " + seed.shape().str() + " != root dims " +
                       node(root).value.shape().str());
    grad(root) = seed;
    for (int i = root; i >= 0; --i) {
      Node& n = node(i);
      if (n.back && !n.grad.empty()) n.back(*this, i);
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    BackFn back;
    bool needs_grad = false;
  };

  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }

  std::vector<Node> nodes_;
  bool recording_;
};

// Handle to a node; everything block-level passes these around by value.
template <typename T>
struct Val {
  Graph<T>* g = nullptr;
  int id = -1;

  bool valid() const { return g != nullptr && id >= 0; }
  const Tensor<T>& v() const { return g->val(id); }
  const Shape& shape() const { return g->val(id).shape(); }
};

template <typename T>
Val<T> make_leaf(Graph<T>& g, Tensor<T> value, bool needs_grad = false) {
  return Val<T>{&g, g.leaf(std::move(value), needs_grad)};
}

}  // namespace sgglc
