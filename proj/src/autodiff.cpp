#include "sepformer/autodiff.hpp"

#include "sepformer/errors.hpp"

namespace sepformer {
namespace {

thread_local Tape* t_active_tape = nullptr;

}  // namespace

NdArray& Node::grad_buffer() {
  if (grad.empty()) grad = NdArray(value.shape(), 0.0);
  return grad;
}

Var::Var() : node_(std::make_shared<Node>()) {}

Var::Var(NdArray value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

NdArray Var::grad() const {
  if (node_->grad.empty()) return NdArray(node_->value.shape(), 0.0);
  return node_->grad;
}

void Var::zero_grad() { node_->grad = NdArray(); }

void Tape::backward(const Var& loss) {
  if (loss.value().size() != 1) {
    throw DimensionError("backward() needs a scalar loss, got shape " +
                         shape_string(loss.shape()));
  }
  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

TapeScope::TapeScope(Tape& tape) : previous_(t_active_tape) {
  t_active_tape = &tape;
}

TapeScope::~TapeScope() { t_active_tape = previous_; }

Tape* active_tape() { return t_active_tape; }

Tape* tape_for(Var& out, std::initializer_list<const Var*> inputs) {
  if (t_active_tape == nullptr) return nullptr;
  for (const Var* v : inputs) {
    if (v->requires_grad()) {
      out.node()->requires_grad = true;
      return t_active_tape;
    }
  }
  return nullptr;
}

Tape* tape_for(Var& out, const std::vector<Var>& inputs) {
  if (t_active_tape == nullptr) return nullptr;
  for (const Var& v : inputs) {
    if (v.requires_grad()) {
      out.node()->requires_grad = true;
      return t_active_tape;
    }
  }
  return nullptr;
}

}  // namespace sepformer
