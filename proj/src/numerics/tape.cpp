#include "pmkg/numerics/tape.hpp"

#include <algorithm>

#include "pmkg/error.hpp"

namespace pmkg {

Tensor* GradSlots::operator()(std::size_t k) {
  const auto id = inputs_[k];
  if (!tape_.nodes_[id].requires_grad) return nullptr;
  if (!present_[id]) {
    grads_[id] = Tensor::zeros_like(tape_.nodes_[id].value);
    present_[id] = true;
  }
  return &grads_[id];
}

const Tensor& GradSlots::input(std::size_t k) const { return tape_.nodes_[inputs_[k]].value; }

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, true});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::record(Tensor value, std::vector<std::uint32_t> inputs, BackwardFn backward) {
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [&](std::uint32_t id) { return nodes_[id].requires_grad; });
  nodes_.push_back(Node{std::move(value), std::move(inputs),
                        needs ? std::move(backward) : BackwardFn{}, needs});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

std::vector<Tensor> Tape::gradients(Var output, std::span<const Var> wrt) const {
  if (output.tape != this) fail_numeric("foreign-node", "output belongs to another tape");
  const auto& out_node = nodes_[output.id];
  if (!out_node.value.is_scalar()) {
    fail_numeric("non-scalar-output", "gradient output has shape " +
                                          shape_string(out_node.value.shape()));
  }

  const std::size_t count = static_cast<std::size_t>(output.id) + 1;
  std::vector<Tensor> grads(count);
  std::vector<bool> present(count, false);
  if (out_node.requires_grad) {
    grads[output.id] = Tensor(out_node.value.shape(), 1.0);
    present[output.id] = true;
  }

  for (std::size_t i = count; i-- > 0;) {
    const Node& node = nodes_[i];
    if (!present[i] || !node.backward) continue;
    GradSlots slots(*this, node.inputs, grads, present);
    node.backward(grads[i], node.value, slots);
  }

  std::vector<Tensor> result;
  result.reserve(wrt.size());
  for (const Var& v : wrt) {
    if (v.tape != this) fail_numeric("foreign-node", "wrt node belongs to another tape");
    if (v.id < count && present[v.id]) {
      result.push_back(grads[v.id]);
    } else {
      result.push_back(Tensor::zeros_like(nodes_[v.id].value));
    }
  }
  return result;
}

void Tape::note_branch(std::uint64_t decision) noexcept {
  fingerprint_ ^= decision + 0x9e3779b97f4a7c15ull + (fingerprint_ << 6) + (fingerprint_ >> 2);
}

}  // namespace pmkg
