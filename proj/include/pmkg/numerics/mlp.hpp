#pragma once

#include <random>
#include <string>
#include <vector>

#include "pmkg/numerics/tape.hpp"

namespace pmkg {

struct DenseLayer {
  Tensor weight;  // in × out
  Tensor bias;    // out
};

// Affine layers joined by LeakyReLU. With `activate_output` the last layer is
// followed by the activation as well (single-layer scorers such as g_n).
struct MlpParams {
  std::vector<DenseLayer> layers;
  double slope = 0.01;
  bool activate_output = false;

  std::size_t in_dim() const;
  std::size_t out_dim() const;
  void validate() const;
};

// Tape-bound counterpart of MlpParams.
struct MlpVars {
  std::vector<std::pair<Var, Var>> layers;
  double slope = 0.01;
  bool activate_output = false;
};

MlpParams make_mlp(const std::vector<std::size_t>& dims, double slope, bool activate_output,
                   std::mt19937_64& rng);

Var mlp_forward(const MlpVars& mlp, Var x);
Tensor mlp_forward(const MlpParams& mlp, const Tensor& x);

}  // namespace pmkg
