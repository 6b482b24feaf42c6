#include "pmkg/kg/sampling.hpp"

#include <algorithm>
#include <numeric>

#include "pmkg/error.hpp"

namespace pmkg {

EntityId negative_sample(const Kg& kg, EntityId head, RelationId relation, std::mt19937_64& rng) {
  const std::size_t n = kg.entity_count();
  if (n == 0) fail_data("saturated-relation", "graph has no entities");
  std::uniform_int_distribution<EntityId> pick(0, static_cast<EntityId>(n - 1));
  for (int attempt = 0; attempt < kNegativeRetries; ++attempt) {
    const EntityId t = pick(rng);
    if (!kg.contains(head, relation, t)) return t;
  }
  std::vector<EntityId> valid;
  for (EntityId t = 0; t < n; ++t) {
    if (!kg.contains(head, relation, t)) valid.push_back(t);
  }
  if (valid.empty()) {
    fail_data("saturated-relation", "head '" + kg.entities().name(head) + "' relates to every entity via '" +
                                        kg.relations().name(relation) + "'");
  }
  std::uniform_int_distribution<std::size_t> pick_valid(0, valid.size() - 1);
  return valid[pick_valid(rng)];
}

Episode sample_episode(const Kg& kg, const RelationTask& task, std::size_t k, std::size_t num_queries,
                       std::mt19937_64& rng) {
  if (k < 1) fail_usage("bad-shot", "K must be at least 1");
  if (task.triples.size() < k + 1) {
    fail_usage("too-few-triples", "relation '" + kg.relations().name(task.relation) + "' has " +
                                      std::to_string(task.triples.size()) + " triples, needs K+1=" +
                                      std::to_string(k + 1));
  }
  std::vector<std::size_t> order(task.triples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t queries = std::min(std::max<std::size_t>(num_queries, 1), task.triples.size() - k);

  Episode ep;
  ep.relation = task.relation;
  for (std::size_t i = 0; i < k; ++i) ep.support.push_back(task.triples[order[i]]);
  for (std::size_t i = k; i < k + queries; ++i) ep.queries.push_back(task.triples[order[i]]);
  for (const auto& t : ep.support) ep.support_negatives.push_back(negative_sample(kg, t.head, t.relation, rng));
  for (const auto& t : ep.queries) ep.query_negatives.push_back(negative_sample(kg, t.head, t.relation, rng));
  ep.seed = rng();
  return ep;
}

Episode make_eval_episode(const Kg& kg, const FewShotTask& task, std::mt19937_64& rng) {
  Episode ep;
  ep.relation = task.relation;
  ep.support = task.support;
  for (const auto& t : ep.support) ep.support_negatives.push_back(negative_sample(kg, t.head, t.relation, rng));
  for (const auto& q : task.queries) ep.queries.push_back(Triple{q.head, task.relation, q.tail});
  ep.seed = rng();
  return ep;
}

}  // namespace pmkg
