#include "pmkg/numerics/mlp.hpp"

#include <cmath>

#include "pmkg/error.hpp"
#include "pmkg/numerics/ops.hpp"

namespace pmkg {

std::size_t MlpParams::in_dim() const {
  if (layers.empty()) fail_numeric("empty-mlp");
  return layers.front().weight.rows();
}

std::size_t MlpParams::out_dim() const {
  if (layers.empty()) fail_numeric("empty-mlp");
  return layers.back().weight.cols();
}

void MlpParams::validate() const {
  if (layers.empty()) fail_numeric("empty-mlp");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& layer = layers[i];
    if (!layer.weight.is_matrix() || layer.bias.size() != layer.weight.cols()) {
      fail_numeric("dim-mismatch", "mlp layer " + std::to_string(i) + " bias/weight disagree");
    }
    if (i > 0 && layers[i - 1].weight.cols() != layer.weight.rows()) {
      fail_numeric("dim-mismatch", "mlp layers " + std::to_string(i - 1) + "→" +
                                       std::to_string(i) + " do not chain");
    }
  }
}

MlpParams make_mlp(const std::vector<std::size_t>& dims, double slope, bool activate_output,
                   std::mt19937_64& rng) {
  if (dims.size() < 2) fail_numeric("empty-mlp", "need input and output dims");
  MlpParams mlp;
  mlp.slope = slope;
  mlp.activate_output = activate_output;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const double bound = std::sqrt(6.0 / static_cast<double>(dims[i] + dims[i + 1]));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    DenseLayer layer{Tensor({dims[i], dims[i + 1]}), Tensor({dims[i + 1]})};
    for (auto& w : layer.weight.values()) w = uniform(rng);
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

Var mlp_forward(const MlpVars& mlp, Var x) {
  if (mlp.layers.empty()) fail_numeric("empty-mlp");
  Var h = x;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    const auto& [weight, bias] = mlp.layers[i];
    if (h.value().cols() != weight.value().rows()) {
      fail_numeric("dim-mismatch", "mlp input " + shape_string(h.value().shape()) +
                                       " vs layer " + shape_string(weight.value().shape()));
    }
    h = h.value().is_matrix() ? ops::add_row(ops::matmul(h, weight), bias)
                              : ops::add(ops::matmul(h, weight), bias);
    const bool last = i + 1 == mlp.layers.size();
    if (!last || mlp.activate_output) h = ops::leaky_relu(h, mlp.slope);
  }
  return h;
}

Tensor mlp_forward(const MlpParams& mlp, const Tensor& x) {
  mlp.validate();
  Tape tape;
  MlpVars vars{{}, mlp.slope, mlp.activate_output};
  for (const auto& layer : mlp.layers) {
    vars.layers.emplace_back(tape.constant(layer.weight), tape.constant(layer.bias));
  }
  return mlp_forward(vars, tape.constant(x)).value();
}

}  // namespace pmkg
