#include "pmkg/model/scorer.hpp"

#include <algorithm>
#include <cmath>

#include "pmkg/error.hpp"
#include "pmkg/numerics/ops.hpp"

namespace pmkg {

Var combine_entity(Var relational, Var semantic) {
  if (relational.value().size() != semantic.value().size()) {
    fail_numeric("dim-mismatch", "relational and semantic entity embeddings differ in width");
  }
  return ops::add(relational, semantic);
}

Var project(Var entity, Var entity_projection, Var relation_projection) {
  return ops::add(ops::scale_by(relation_projection, ops::dot(entity_projection, entity)), entity);
}

Tensor project(std::span<const double> entity, std::span<const double> entity_projection,
               std::span<const double> relation_projection) {
  if (entity.size() != entity_projection.size() || entity.size() != relation_projection.size()) {
    fail_numeric("dim-mismatch", "project");
  }
  const double s = dot(entity_projection, entity);
  Tensor out({entity.size()});
  for (std::size_t i = 0; i < entity.size(); ++i) out[i] = relation_projection[i] * s + entity[i];
  return out;
}

Var score_triple(Var head_projected, Var meta, Var tail_projected) {
  return ops::l2_norm(ops::sub(ops::add(head_projected, meta), tail_projected));
}

double score_triple(std::span<const double> head_projected, std::span<const double> meta,
                    std::span<const double> tail_projected) {
  if (head_projected.size() != meta.size() || meta.size() != tail_projected.size()) {
    fail_numeric("dim-mismatch", "score_triple");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < meta.size(); ++i) {
    const double r = head_projected[i] + meta[i] - tail_projected[i];
    s += r * r;
  }
  return std::sqrt(s);
}

Var margin_loss(const std::vector<Var>& positive, const std::vector<Var>& negative, double margin) {
  if (positive.size() != negative.size()) fail_numeric("length-mismatch", "positive and negative scores");
  if (positive.empty()) fail_numeric("empty-loss", "margin loss over no pairs");
  std::vector<Var> terms;
  terms.reserve(positive.size());
  for (std::size_t i = 0; i < positive.size(); ++i) {
    terms.push_back(ops::relu(ops::add_scalar(ops::sub(positive[i], negative[i]), margin)));
  }
  return ops::add_n(terms);
}

double margin_loss(std::span<const double> positive, std::span<const double> negative, double margin) {
  if (positive.size() != negative.size()) fail_numeric("length-mismatch", "positive and negative scores");
  double total = 0.0;
  for (std::size_t i = 0; i < positive.size(); ++i) total += std::max(0.0, positive[i] + margin - negative[i]);
  return total;
}

AdaptValues values_of(const AdaptVars& vars) {
  AdaptValues out{vars.meta.value(), vars.relation_projection.value(), {}};
  for (const auto& [e, v] : vars.entity_projection) out.entity_projection.emplace(e, v.value());
  return out;
}

AdaptVars as_leaves(Tape& tape, const AdaptValues& values) {
  AdaptVars out{tape.leaf(values.meta), tape.leaf(values.relation_projection), {}};
  for (const auto& [e, t] : values.entity_projection) out.entity_projection.emplace(e, tape.leaf(t));
  return out;
}

namespace {

Var lookup(const std::map<EntityId, Var>& table, EntityId e, const char* what) {
  const auto it = table.find(e);
  if (it == table.end()) fail_numeric("missing-entity", std::string(what) + " " + std::to_string(e));
  return it->second;
}

}  // namespace

Var triple_margin_loss(const ScoringInputs& in, std::span<const Triple> positives,
                       std::span<const EntityId> negative_tails, double margin) {
  if (in.state == nullptr) fail_numeric("missing-state");
  if (positives.size() != negative_tails.size()) fail_numeric("length-mismatch", "triples and negatives");
  const AdaptVars& st = *in.state;
  auto projected = [&](EntityId e) {
    return project(lookup(in.entities, e, "embedding"), lookup(st.entity_projection, e, "projection"),
                   st.relation_projection);
  };
  std::vector<Var> pos, neg;
  for (std::size_t i = 0; i < positives.size(); ++i) {
    const Var h = projected(positives[i].head);
    pos.push_back(score_triple(h, st.meta, projected(positives[i].tail)));
    neg.push_back(score_triple(h, st.meta, projected(negative_tails[i])));
  }
  return margin_loss(pos, neg, margin);
}

AdaptVars inner_update(Var support_loss, const AdaptVars& state, double lr, AdaptValues* deltas) {
  Tape& tape = *support_loss.tape;
  std::vector<Var> wrt{state.meta, state.relation_projection};
  for (const auto& [e, v] : state.entity_projection) wrt.push_back(v);
  auto grads = tape.gradients(support_loss, wrt);
  for (auto& g : grads) g *= lr;

  AdaptValues d;
  d.meta = std::move(grads[0]);
  d.relation_projection = std::move(grads[1]);
  std::size_t k = 2;
  for (const auto& [e, v] : state.entity_projection) d.entity_projection.emplace(e, std::move(grads[k++]));
  AdaptVars out = apply_deltas(state, d);
  if (deltas != nullptr) *deltas = std::move(d);
  return out;
}

AdaptVars apply_deltas(const AdaptVars& state, const AdaptValues& deltas) {
  Tape& tape = *state.meta.tape;
  AdaptVars out;
  out.meta = ops::sub(state.meta, tape.constant(deltas.meta));
  out.relation_projection = ops::sub(state.relation_projection, tape.constant(deltas.relation_projection));
  for (const auto& [e, v] : state.entity_projection) {
    const auto it = deltas.entity_projection.find(e);
    out.entity_projection.emplace(e, it == deltas.entity_projection.end()
                                         ? v
                                         : ops::sub(v, tape.constant(it->second)));
  }
  return out;
}

BacktrackingResult backtracking_inner_step(const AdaptLossFn& loss, const AdaptValues& start, double lr,
                                           int max_halvings) {
  BacktrackingResult result;
  AdaptValues gradient;
  {
    Tape tape;
    const AdaptVars vars = as_leaves(tape, start);
    const Var l = loss(tape, vars);
    result.before = l.value().item();
    inner_update(l, vars, 1.0, &gradient);
  }
  auto step = [&](double rate) {
    AdaptValues next = start;
    next.meta.axpy(-rate, gradient.meta);
    next.relation_projection.axpy(-rate, gradient.relation_projection);
    for (auto& [e, t] : next.entity_projection) t.axpy(-rate, gradient.entity_projection.at(e));
    return next;
  };
  double rate = lr;
  for (int h = 0; h <= max_halvings; ++h, rate *= 0.5) {
    AdaptValues candidate = step(rate);
    Tape tape;
    const double after = loss(tape, as_leaves(tape, candidate)).value().item();
    if (after <= result.before) {
      result.after = after;
      result.lr = rate;
      result.halvings = h;
      result.adapted = std::move(candidate);
      return result;
    }
  }
  result.after = result.before;
  result.lr = 0.0;
  result.halvings = max_halvings;
  result.adapted = start;
  return result;
}

Var total_loss(Var query_loss, Var pool_loss, double pool_weight) {
  if (!(pool_weight >= 0.0)) fail_numeric("bad-weight", "pool weight must be non-negative");
  if (!pool_loss.valid() || pool_weight == 0.0) return query_loss;
  return ops::add(query_loss, ops::scale(pool_loss, pool_weight));
}

double total_loss(double query_loss, double pool_loss, double pool_weight) {
  if (!(pool_weight >= 0.0)) fail_numeric("bad-weight", "pool weight must be non-negative");
  return query_loss + pool_weight * pool_loss;
}

}  // namespace pmkg
