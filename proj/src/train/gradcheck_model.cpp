#include "pmkg/train/gradcheck_model.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>

#include "pmkg/numerics/gradcheck.hpp"

namespace pmkg {

std::vector<GroupCheck> gradcheck_model(const Model& model, const Kg& kg, const Episode& episode,
                                        std::span<const std::size_t> batch_prompts, double eps) {
  EpisodeOptions options;
  options.dropout = false;
  options.batch_prompts = batch_prompts;
  const EpisodeOutput base = run_episode(model, kg, episode, options);
  const bool frozen = !model.config.second_order;
  if (frozen) options.frozen_deltas = &base.deltas;

  std::map<std::string, GroupCheck> groups;
  for (const auto& [name, value] : model.params) {
    Model probe = model;
    const ScalarFunction f = [&](const Tensor& x) {
      probe.params[name] = x;
      const EpisodeOutput out = run_episode(probe, kg, episode, options);
      ParamStore dense;
      dense.emplace(name, Tensor::zeros_like(x));
      std::vector<ParamBinder::GradientEntry> mine;
      for (const auto& e : out.gradient) {
        if (e.name == name) mine.push_back(e);
      }
      accumulate(dense, mine);
      return Evaluation{out.total, std::move(dense.at(name)), out.piece};
    };
    const GradCheckReport report = finite_difference_check(f, value, eps);
    GroupCheck& g = groups[param_group(name)];
    g.group = param_group(name);
    g.checked += report.checked;
    g.skipped += report.skipped;
    if (report.checked > 0 && (g.worst_parameter.empty() || report.max_relative_error > g.max_relative_error)) {
      g.max_relative_error = report.max_relative_error;
      g.worst_parameter = name;
    }
  }
  std::vector<GroupCheck> out;
  for (auto& [name, g] : groups) out.push_back(std::move(g));
  return out;
}

GradcheckProblem make_gradcheck_problem(std::size_t dim, std::uint64_t seed, bool second_order) {
  SyntheticSpec spec;
  spec.types = 2;
  spec.entities_per_type = 5;
  spec.relations = 2;
  spec.triples_per_relation = 5;
  spec.valid_relations = 0;
  spec.test_relations = 1;
  spec.background_relations = 1;
  spec.background_triples_per_relation = 12;
  spec.dim = dim;
  spec.candidates = 10;
  spec.held_out_share = 0.0;
  spec.seed = seed;

  GradcheckProblem p;
  p.dataset = to_dataset(generate_synthetic_kg(spec), {.neighbor_cap = 50, .seed = seed});
  ModelConfig config;
  config.dim = dim;
  config.pool_size = 4;
  config.pool_negatives = 3;
  config.second_order = second_order;
  p.model = Model{config, init_params(config, p.dataset, seed)};

  std::mt19937_64 rng(seed);
  p.episode = sample_episode(p.dataset.kg, p.dataset.train.front(), 2, 3, rng);
  p.batch_prompts.resize(config.pool_size);
  std::iota(p.batch_prompts.begin(), p.batch_prompts.end(), std::size_t{0});
  return p;
}

bool gradcheck_passes(const std::vector<GroupCheck>& groups, double tolerance) {
  return !groups.empty() && std::all_of(groups.begin(), groups.end(), [&](const GroupCheck& g) {
    return g.checked > 0 && g.max_relative_error <= tolerance;
  });
}

}  // namespace pmkg
