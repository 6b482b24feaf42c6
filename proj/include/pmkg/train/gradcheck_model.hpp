#pragma once

#include <span>
#include <string>
#include <vector>

#include "pmkg/kg/synthetic.hpp"
#include "pmkg/model/episode.hpp"

namespace pmkg {

struct GroupCheck {
  std::string group;
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

// Finite-difference check of the episode objective against its analytic
// gradient, for every parameter tensor, summarised per parameter group.
// First-order models are checked with the inner-step deltas frozen at the
// unperturbed point; second-order models against the true objective.
// Dropout is off.
std::vector<GroupCheck> gradcheck_model(const Model& model, const Kg& kg, const Episode& episode,
                                        std::span<const std::size_t> batch_prompts, double eps);

// A 10-entity graph (two types of five, two few-shot relations and one
// background relation) with a small model and one training episode.
struct GradcheckProblem {
  Dataset dataset;
  Model model;
  Episode episode;
  std::vector<std::size_t> batch_prompts;
};

GradcheckProblem make_gradcheck_problem(std::size_t dim, std::uint64_t seed, bool second_order = false);

bool gradcheck_passes(const std::vector<GroupCheck>& groups, double tolerance);

}  // namespace pmkg
