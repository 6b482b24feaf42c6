#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>

#include "pmkg/kg/dataset.hpp"
#include "pmkg/model/episode.hpp"

namespace pmkg {

struct Metrics {
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits5 = 0.0;
  double hits10 = 0.0;
  std::size_t count = 0;

  bool operator==(const Metrics&) const = default;
};

Metrics compute_metrics(std::span<const std::size_t> ranks);

// 1-based rank of `truth` when candidates are sorted by ascending score,
// ties ordered by candidate id.
std::size_t rank_candidates(std::span<const double> scores, std::span<const EntityId> candidates,
                            EntityId truth);

struct EvalReport {
  Metrics overall;
  std::map<std::string, Metrics> per_relation;
};

// Ranks every query of every task: support = first `shots` triples with
// negatives drawn from a per-relation seed, candidates from the dataset.
EvalReport evaluate(const Model& model, const Dataset& dataset, const std::vector<RelationTask>& tasks,
                    std::size_t shots, std::uint64_t seed);

}  // namespace pmkg
