#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "sepformer/ndarray.hpp"

namespace sepformer {

struct Node {
  NdArray value;
  NdArray grad;  // empty until something flows into it
  bool requires_grad = false;

  // Gradient buffer, zero-initialised on first use.
  NdArray& grad_buffer();
};

// Shared handle to a value that may participate in reverse-mode
// differentiation. Copies alias the same node.
class Var {
 public:
  Var();
  explicit Var(NdArray value, bool requires_grad = false);

  const NdArray& value() const { return node_->value; }
  NdArray& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }

  // Accumulated gradient; zeros of the value's shape if nothing reached it.
  NdArray grad() const;
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad();

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Ordered record of backward closures. Replay runs them in exact reverse
// execution order. Single-owner: one tape per worker.
class Tape {
 public:
  using Backward = std::function<void()>;

  void record(Backward fn) { ops_.push_back(std::move(fn)); }
  std::size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and replays. `loss` must hold one element.
  void backward(const Var& loss);

 private:
  std::vector<Backward> ops_;
};

// Installs `tape` as this thread's recording target for its lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

// Op-authoring helper: returns the tape to record on if any input needs a
// gradient, marking `out` as requiring one; nullptr otherwise.
Tape* tape_for(Var& out, std::initializer_list<const Var*> inputs);
Tape* tape_for(Var& out, const std::vector<Var>& inputs);

}  // namespace sepformer
