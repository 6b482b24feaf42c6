#include "pmkg/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "pmkg/error.hpp"

namespace pmkg {

GradCheckReport finite_difference_check(const ScalarFunction& f, const Tensor& point, double eps) {
  if (!(eps > 0.0)) fail_numeric("bad-eps", "finite difference step must be positive");
  const Evaluation base = f(point);
  require_same_shape(base.gradient, point, "finite_difference_check gradient");

  GradCheckReport report;
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + eps;
    const Evaluation plus = f(probe);
    probe[i] = point[i] - eps;
    const Evaluation minus = f(probe);
    probe[i] = point[i];

    if (plus.piece != base.piece || minus.piece != base.piece) {
      ++report.skipped;
      continue;
    }
    const double central = (plus.value - minus.value) / (2.0 * eps);
    const double err = std::abs(base.gradient[i] - central) / std::max(1.0, std::abs(central));
    ++report.checked;
    if (err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst_index = i;
    }
  }
  return report;
}

}  // namespace pmkg
