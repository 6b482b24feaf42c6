#pragma once

#include "pmkg/model/params.hpp"

namespace pmkg {

// Adam with bias correction, applied densely to every parameter.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore& params, const ParamStore& gradient);
  std::size_t steps() const noexcept { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  ParamStore m_, v_;
};

}  // namespace pmkg
