#include "pmkg/train/metrics.hpp"

#include <algorithm>

#include "pmkg/error.hpp"
#include "pmkg/kg/sampling.hpp"

namespace pmkg {

Metrics compute_metrics(std::span<const std::size_t> ranks) {
  if (ranks.empty()) fail_data("no-ranks", "metrics over an empty rank list");
  Metrics m;
  for (auto r : ranks) {
    if (r == 0) fail_numeric("bad-rank", "ranks are 1-based");
    m.mrr += 1.0 / static_cast<double>(r);
    m.hits1 += r <= 1 ? 1.0 : 0.0;
    m.hits5 += r <= 5 ? 1.0 : 0.0;
    m.hits10 += r <= 10 ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(ranks.size());
  m.mrr /= n;
  m.hits1 /= n;
  m.hits5 /= n;
  m.hits10 /= n;
  m.count = ranks.size();
  return m;
}

std::size_t rank_candidates(std::span<const double> scores, std::span<const EntityId> candidates,
                            EntityId truth) {
  if (scores.size() != candidates.size()) fail_numeric("length-mismatch", "scores and candidates");
  const auto it = std::find(candidates.begin(), candidates.end(), truth);
  if (it == candidates.end()) fail_data("true-tail-missing", "true tail is not among the candidates");
  const double s = scores[static_cast<std::size_t>(it - candidates.begin())];
  std::size_t rank = 1;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (scores[i] < s || (scores[i] == s && candidates[i] < truth)) ++rank;
  }
  return rank;
}

EvalReport evaluate(const Model& model, const Dataset& dataset, const std::vector<RelationTask>& tasks,
                    std::size_t shots, std::uint64_t seed) {
  if (tasks.empty()) fail_data("no-tasks", "nothing to evaluate");
  const Tensor enhanced = encode_entities(model, dataset.kg);
  std::vector<std::size_t> all;
  EvalReport report;
  for (const auto& rt : tasks) {
    const FewShotTask task = make_few_shot_task(rt, shots, dataset.candidates);
    std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ull * (rt.relation + 1)));
    const Episode ep = make_eval_episode(dataset.kg, task, rng);
    const AdaptedTask adapted = adapt_task(model, enhanced, ep.support, ep.support_negatives);
    std::vector<std::size_t> ranks;
    for (const auto& q : task.queries) {
      std::vector<double> scores;
      scores.reserve(q.candidates.size());
      for (EntityId c : q.candidates) scores.push_back(score_candidate(model, enhanced, adapted, q.head, c));
      ranks.push_back(rank_candidates(scores, q.candidates, q.tail));
    }
    report.per_relation[dataset.kg.relations().name(rt.relation)] = compute_metrics(ranks);
    all.insert(all.end(), ranks.begin(), ranks.end());
  }
  report.overall = compute_metrics(all);
  return report;
}

}  // namespace pmkg
