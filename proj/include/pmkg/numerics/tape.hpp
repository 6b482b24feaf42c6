#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "pmkg/numerics/tensor.hpp"

namespace pmkg {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  bool valid() const noexcept { return tape != nullptr; }
};

// Lazily materialised gradient slots for a node's inputs during the reverse pass.
class GradSlots {
 public:
  GradSlots(const Tape& tape, std::span<const std::uint32_t> inputs,
            std::vector<Tensor>& grads, std::vector<bool>& present)
      : tape_(tape), inputs_(inputs), grads_(grads), present_(present) {}

  // Returns nullptr when input k does not need a gradient.
  Tensor* operator()(std::size_t k);
  const Tensor& input(std::size_t k) const;

 private:
  const Tape& tape_;
  std::span<const std::uint32_t> inputs_;
  std::vector<Tensor>& grads_;
  std::vector<bool>& present_;
};

using BackwardFn = std::function<void(const Tensor& grad_out, const Tensor& out, GradSlots& slots)>;

// Records a differentiable computation in topological order. Single writer:
// one episode's forward and backward run on one tape.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value);
  Var constant(Tensor value);
  Var record(Tensor value, std::vector<std::uint32_t> inputs, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Exact reverse-mode gradients of a scalar output. Nodes in `wrt` that the
  // output does not depend on receive zero tensors of matching shape.
  std::vector<Tensor> gradients(Var output, std::span<const Var> wrt) const;

  // Piecewise-smoothness fingerprint: every branch decision (activation
  // side, argmax choice) is folded in, so two evaluations with equal
  // fingerprints lie on the same smooth piece.
  void note_branch(std::uint64_t decision) noexcept;
  std::uint64_t branch_fingerprint() const noexcept { return fingerprint_; }

 private:
  friend class GradSlots;

  struct Node {
    Tensor value;
    std::vector<std::uint32_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  // Deque so references returned by value() survive later recordings.
  std::deque<Node> nodes_;
  std::uint64_t fingerprint_ = 1469598103934665603ull;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

}  // namespace pmkg
