#include "normkd/numcore/tape.hpp"

#include "normkd/error.hpp"

namespace normkd {

const Matrix& Var::value() const {
  if (tape_ == nullptr) throw ContractError("value() on an unbound Var");
  return tape_->value(index_);
}

Var Tape::leaf(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::vector<std::size_t> parents, BackwardFn backward) {
  bool needs = false;
  for (std::size_t p : parents) {
    if (p >= nodes_.size()) throw ContractError("parent index beyond tape end");
    needs = needs || nodes_[p].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), std::move(parents),
                        needs ? std::move(backward) : BackwardFn{}, needs});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(std::vector<Matrix>& grads, std::size_t index, const Matrix& contribution) {
  Matrix& slot = grads[index];
  if (slot.empty() && slot.rows() == 0) {
    slot = contribution;
  } else {
    slot += contribution;
  }
}

Gradients Tape::backward(Var output) const {
  if (&output.tape() != this) throw ContractError("backward: output belongs to another tape");
  const Matrix& out = nodes_.at(output.index()).value;
  if (out.rows() != 1 || out.cols() != 1) {
    throw ContractError("backward: output must be a scalar node, got " + out.shape_string());
  }
  Gradients result;
  result.grads_.resize(nodes_.size());
  result.grads_[output.index()] = Matrix(1, 1, 1.0);
  for (std::size_t i = output.index() + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (!node.backward || result.grads_[i].rows() == 0) continue;
    const Matrix grad_out = result.grads_[i];
    node.backward(grad_out, result.grads_);
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (result.grads_[i].rows() == 0) {
      result.grads_[i] = Matrix(nodes_[i].value.rows(), nodes_[i].value.cols());
    }
  }
  return result;
}

}  // namespace normkd
