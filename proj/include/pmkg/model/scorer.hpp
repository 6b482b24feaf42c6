#pragma once

#include <functional>
#include <map>
#include <span>
#include <vector>

#include "pmkg/kg/kg.hpp"
#include "pmkg/numerics/tape.hpp"

namespace pmkg {

// h_i = h_r' + h_s
Var combine_entity(Var relational, Var semantic);

// e_proj = r_p·⟨e_p, e⟩ + e
Var project(Var entity, Var entity_projection, Var relation_projection);
Tensor project(std::span<const double> entity, std::span<const double> entity_projection,
               std::span<const double> relation_projection);

// ‖h_proj + mr − t_proj‖₂
Var score_triple(Var head_projected, Var meta, Var tail_projected);
double score_triple(std::span<const double> head_projected, std::span<const double> meta,
                    std::span<const double> tail_projected);

// Σ max(0, pos_i + γ − neg_i)
Var margin_loss(const std::vector<Var>& positive, const std::vector<Var>& negative, double margin);
double margin_loss(std::span<const double> positive, std::span<const double> negative, double margin);

// The quantities refined by the inner step: mr_r, r_p and the projection
// vector of every entity the support set touches.
struct AdaptVars {
  Var meta;
  Var relation_projection;
  std::map<EntityId, Var> entity_projection;
};

struct AdaptValues {
  Tensor meta;
  Tensor relation_projection;
  std::map<EntityId, Tensor> entity_projection;

  bool operator==(const AdaptValues&) const = default;
};

AdaptValues values_of(const AdaptVars& vars);
AdaptVars as_leaves(Tape& tape, const AdaptValues& values);

// Per-entity combined embeddings plus the adaptable state; enough to score
// any triple among the listed entities.
struct ScoringInputs {
  std::map<EntityId, Var> entities;
  const AdaptVars* state = nullptr;
};

// Hinge loss of (h, r, t) against (h, r, t'_i) with one negative per positive.
Var triple_margin_loss(const ScoringInputs& in, std::span<const Triple> positives,
                       std::span<const EntityId> negative_tails, double margin);

// x' = x − lr·∇x L with the gradient held constant (first-order step).
// Returns the step deltas alongside the adapted vars when `deltas` is given.
AdaptVars inner_update(Var support_loss, const AdaptVars& state, double lr,
                       AdaptValues* deltas = nullptr);

// Same shape as inner_update but with precomputed deltas (x' = x − delta).
AdaptVars apply_deltas(const AdaptVars& state, const AdaptValues& deltas);

// Inner step with halving backtracking: the step size starts at `lr` and is
// halved until the loss does not increase (at most `max_halvings` times).
struct BacktrackingResult {
  double before = 0.0;
  double after = 0.0;
  double lr = 0.0;
  int halvings = 0;
  AdaptValues adapted;
};
using AdaptLossFn = std::function<Var(Tape&, const AdaptVars&)>;
BacktrackingResult backtracking_inner_step(const AdaptLossFn& loss, const AdaptValues& start, double lr,
                                           int max_halvings = 60);

// L = L_q + λ·L_pt
Var total_loss(Var query_loss, Var pool_loss, double pool_weight);
double total_loss(double query_loss, double pool_loss, double pool_weight);

}  // namespace pmkg
