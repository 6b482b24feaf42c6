#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pmkg/kg/dataset.hpp"
#include "pmkg/kg/sampling.hpp"
#include "pmkg/model/config.hpp"
#include "pmkg/model/params.hpp"
#include "pmkg/model/scorer.hpp"

namespace pmkg {

struct Model {
  ModelConfig config;
  ParamStore params;
};

struct EpisodeOptions {
  // Dropout on mr_r (training only).
  bool dropout = true;
  // Adds the pool-tuning term; needs the prompts the rest of the batch retrieved.
  bool pool_tuning = true;
  std::span<const std::size_t> batch_prompts;
  // Replaces the inner-step gradient with fixed deltas. With the deltas of
  // an earlier run this turns the first-order objective into an ordinary
  // function of the parameters, which is what gradient checks compare.
  const AdaptValues* frozen_deltas = nullptr;
  bool compute_gradient = true;
};

struct EpisodeOutput {
  double support_loss = 0.0;
  double query_loss = 0.0;
  double pool_loss = 0.0;
  double total = 0.0;
  std::optional<std::size_t> prompt_index;
  AdaptValues deltas;  // inner-step deltas that were applied
  std::uint64_t piece = 0;  // branch fingerprint of the whole computation
  std::vector<ParamBinder::GradientEntry> gradient;
};

// Full training pipeline for one episode: neighbor encoding, task
// embeddings, prompt retrieval, fusion, support loss, inner step, query
// loss and pool tuning. The gradient is first-order unless the model config
// asks for second order.
EpisodeOutput run_episode(const Model& model, const Kg& kg, const Episode& episode,
                          const EpisodeOptions& options = {});

// Index of the prompt an episode's support set retrieves (no tape kept).
std::optional<std::size_t> retrieval_index(const Model& model, std::span<const Triple> support);

// Neighbor-enhanced relational embedding e_r' of every entity (E × d).
Tensor encode_entities(const Model& model, const Kg& kg);

// Result of adapting to a support set at evaluation time.
struct AdaptedTask {
  AdaptValues state;
  std::optional<std::size_t> prompt_index;
};

// Support loss of a task as a function of the adaptable state, with the
// state the forward pass produces. Entity embeddings are held constant.
struct SupportProblem {
  AdaptValues start;
  AdaptLossFn loss;
  std::optional<std::size_t> prompt_index;
};
SupportProblem support_problem(const Model& model, const Tensor& enhanced, std::span<const Triple> support,
                               std::span<const EntityId> support_negatives);

// Forward to mr_r from precomputed entity embeddings, then one inner step.
// Never mutates the model.
AdaptedTask adapt_task(const Model& model, const Tensor& enhanced, std::span<const Triple> support,
                       std::span<const EntityId> support_negatives);

// Score of (head, tail) under an adapted task; projection vectors of
// entities outside the support come from the global table.
double score_candidate(const Model& model, const Tensor& enhanced, const AdaptedTask& task, EntityId head,
                       EntityId tail);

}  // namespace pmkg
