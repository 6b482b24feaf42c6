#include "pmkg/train/adam.hpp"

#include <cmath>

namespace pmkg {

void Adam::step(ParamStore& params, const ParamStore& gradient) {
  if (m_.empty()) {
    m_ = zero_gradient(params);
    v_ = zero_gradient(params);
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& [name, p] : params) {
    const Tensor& g = get_param(gradient, name);
    Tensor& m = get_param(m_, name);
    Tensor& v = get_param(v_, name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      p[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

}  // namespace pmkg
