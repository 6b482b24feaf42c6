#include "pmkg/model/fusion.hpp"

#include "pmkg/error.hpp"
#include "pmkg/numerics/ops.hpp"

namespace pmkg {

Var make_fusion_prompt(const MlpVars& generator, Var semantic, Var relational) {
  return mlp_forward(generator, ops::concat({semantic, relational}));
}

Var fuse(const MlpVars& fuser, Var relational, Var prompt, Var fusion_prompt) {
  if (fuser.layers.empty()) fail_numeric("empty-mlp");
  Tape& tape = *relational.tape;
  const std::size_t in = fuser.layers.front().first.value().rows();
  const std::size_t out = fuser.layers.back().first.value().cols();
  const std::size_t r = relational.value().size();
  // Layout: r (2d) | p (2d) | fp (d).
  if (in != 2 * r + out) {
    fail_numeric("dim-mismatch", "fusion input " + std::to_string(in) + " does not match slots " +
                                     std::to_string(r) + "+" + std::to_string(r) + "+" +
                                     std::to_string(out));
  }
  const Var p = prompt.valid() ? prompt : tape.constant(Tensor({r}));
  const Var fp = fusion_prompt.valid() ? fusion_prompt : tape.constant(Tensor({out}));
  if (p.value().size() != r || fp.value().size() != out) fail_numeric("dim-mismatch", "fusion slot width");
  return mlp_forward(fuser, ops::concat({relational, p, fp}));
}

}  // namespace pmkg
