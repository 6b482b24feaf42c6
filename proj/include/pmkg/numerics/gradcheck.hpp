#pragma once

#include <cstdint>
#include <functional>

#include "pmkg/numerics/tensor.hpp"

namespace pmkg {

// One evaluation of a scalar function. `piece` identifies the smooth piece the
// point lies on (see Tape::branch_fingerprint); `gradient` is only read at the
// base point.
struct Evaluation {
  double value = 0.0;
  Tensor gradient;
  std::uint64_t piece = 0;
};

using ScalarFunction = std::function<Evaluation(const Tensor&)>;

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  // Coordinates whose ±eps probes crossed a kink or argmax switch.
  std::size_t skipped = 0;
};

// Compares the analytic gradient at `point` with central differences. The
// error per coordinate is |analytic − central| / max(1, |central|).
GradCheckReport finite_difference_check(const ScalarFunction& f, const Tensor& point, double eps);

}  // namespace pmkg
