#pragma once

#include <random>
#include <vector>

#include "pmkg/kg/dataset.hpp"
#include "pmkg/kg/kg.hpp"

namespace pmkg {

// One training or evaluation episode of a few-shot task. negatives[i] is the
// corrupted tail paired with support[i] (resp. queries[i]).
struct Episode {
  RelationId relation = 0;
  std::vector<Triple> support;
  std::vector<EntityId> support_negatives;
  std::vector<Triple> queries;
  std::vector<EntityId> query_negatives;
  std::uint64_t seed = 0;

  bool operator==(const Episode&) const = default;
};

inline constexpr int kNegativeRetries = 100;

// Uniform corrupted tail t' with (h, r, t') not in the graph. After
// kNegativeRetries rejected draws, falls back to a uniform pick among all
// valid tails; throws "saturated-relation" when none exists.
EntityId negative_sample(const Kg& kg, EntityId head, RelationId relation, std::mt19937_64& rng);

// Random disjoint split of a task's triples into k support and up to
// num_queries queries, each with one negative.
Episode sample_episode(const Kg& kg, const RelationTask& task, std::size_t k,
                       std::size_t num_queries, std::mt19937_64& rng);

// Evaluation episode: fixed support (first K) with sampled negatives; queries
// are ranked against candidates instead of negatives.
Episode make_eval_episode(const Kg& kg, const FewShotTask& task, std::mt19937_64& rng);

}  // namespace pmkg
