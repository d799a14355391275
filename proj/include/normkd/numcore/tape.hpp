#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "normkd/numcore/matrix.hpp"

namespace normkd {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  std::size_t index() const noexcept { return index_; }
  Tape& tape() const noexcept { return *tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

/// Result of a backward pass: d(output)/d(node) for every node on the tape.
class Gradients {
 public:
  /// Gradient with respect to `v`; a zero matrix of v's shape when v did not
  /// influence the output.
  const Matrix& operator[](Var v) const { return grads_.at(v.index()); }

 private:
  friend class Tape;
  std::vector<Matrix> grads_;
};

/// Reverse-mode differentiation tape. Nodes are appended in evaluation order,
/// so parents always precede children. Single-owner; not thread-safe.
class Tape {
 public:
  /// Accumulates the incoming output gradient into the parents' slots of `grads`.
  using BackwardFn = std::function<void(const Matrix& grad_out, std::vector<Matrix>& grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input.
  Var leaf(Matrix value);
  /// Input that never receives gradient.
  Var constant(Matrix value);
  /// Appends a derived node. `backward` is only invoked when some parent
  /// requires gradient.
  Var record(Matrix value, std::vector<std::size_t> parents, BackwardFn backward);

  /// Reverse sweep from a 1x1 output node. Throws ContractError otherwise.
  Gradients backward(Var output) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  const Matrix& value(std::size_t index) const { return nodes_.at(index).value; }
  bool requires_grad(std::size_t index) const { return nodes_.at(index).requires_grad; }
  const std::vector<std::size_t>& parents(std::size_t index) const {
    return nodes_.at(index).parents;
  }

  /// Adds `contribution` into grads[index], allocating the slot on first use.
  static void accumulate(std::vector<Matrix>& grads, std::size_t index, const Matrix& contribution);

 private:
  struct Node {
    Matrix value;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
};

}  // namespace normkd
