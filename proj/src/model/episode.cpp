#include "pmkg/model/episode.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <set>

#include "pmkg/error.hpp"
#include "pmkg/model/fusion.hpp"
#include "pmkg/model/neighbor_encoder.hpp"
#include "pmkg/model/semantics.hpp"
#include "pmkg/numerics/ops.hpp"

namespace pmkg {

namespace {

// Seed offsets so dropout and negative-prompt draws use separate streams.
constexpr std::uint64_t kDropoutStream = 0x6d72'6472'6f70ull;
constexpr std::uint64_t kNegativeStream = 0x706f'6f6c'6e65ull;

using EntityFn = std::function<Var(EntityId)>;

struct MetaForward {
  Var meta;
  Var semantic_pairs;  // K × 2d, invalid when semantics are ablated
  std::optional<std::size_t> prompt_index;
  Var prompt;
};

Var pair_matrix(std::span<const Triple> support, const EntityFn& embed) {
  std::vector<Var> heads, tails;
  for (const auto& t : support) {
    heads.push_back(embed(t.head));
    tails.push_back(embed(t.tail));
  }
  return ops::concat_cols(ops::stack_rows(heads), ops::stack_rows(tails));
}

MetaForward forward_meta(const ModelConfig& config, ParamBinder& binder, std::span<const Triple> support,
                         const EntityFn& relational, const EntityFn& semantic) {
  if (support.empty()) fail_usage("no-support", "an episode needs at least one support triple");
  const SelfAttentionVars attn{binder.whole(param::attention_query), binder.whole(param::attention_key),
                               binder.whole(param::attention_value)};
  MetaForward out;
  const Var rel = task_embedding(attn, pair_matrix(support, relational));

  Var sem, fusion_prompt;
  if (config.uses_semantics()) {
    out.semantic_pairs = pair_matrix(support, semantic);
    sem = task_embedding(attn, out.semantic_pairs);
    if (config.uses_pool()) {
      const std::size_t idx = retrieve_prompt(get_param(binder.store(), param::pool), sem.value().values());
      binder.tape().note_branch(idx);
      out.prompt_index = idx;
      out.prompt = binder.row(param::pool, idx);
    } else {
      out.prompt = sem;
    }
    if (config.uses_fusion_prompt()) {
      fusion_prompt = config.fusion_prompt == FusionPromptMode::generated
                          ? make_fusion_prompt(binder.mlp(param::fusion_prompt, config.slope, true), sem, rel)
                          : binder.whole(param::fusion_prompt_shared);
    }
  }
  out.meta = fuse(binder.mlp(param::fuse, config.slope, false), rel, out.prompt, fusion_prompt);
  return out;
}

// Tape-bound neighbor aggregation with a per-episode cache.
class EnhancedEntities {
 public:
  EnhancedEntities(const ModelConfig& config, ParamBinder& binder, const Kg& kg)
      : config_(config), binder_(binder), kg_(kg) {}

  Var operator()(EntityId e) {
    if (const auto it = cache_.find(e); it != cache_.end()) return it->second;
    const Var base = binder_.row(param::entity_relational, e);
    const auto neighbors = kg_.neighbors(e);
    Var out = base;
    if (!neighbors.empty()) {
      std::vector<Var> rels, ents;
      for (const auto& n : neighbors) {
        rels.push_back(binder_.row(param::relation_relational, n.relation));
        ents.push_back(binder_.row(param::entity_relational, n.entity));
      }
      const Var ent_rows = ops::stack_rows(ents);
      const Var batch = ops::concat_cols(ops::stack_rows(rels), ent_rows);
      const auto& enc = vars();
      const Var query = config_.attention_query == AttentionQuery::target ? base : ent_rows;
      out = aggregate(enc, base, batch, attention_weights(enc, query, batch));
    }
    cache_.emplace(e, out);
    return out;
  }

 private:
  const NeighborEncoderVars& vars() {
    if (!vars_) {
      NeighborEncoderVars v;
      v.query = binder_.whole(param::neighbor_query);
      v.key = binder_.whole(param::neighbor_key);
      v.mode = config_.attention_score;
      if (v.mode == AttentionScore::concat) v.score = binder_.mlp(param::neighbor_score, config_.slope, true);
      v.transform = binder_.mlp(param::neighbor_transform, config_.slope, false);
      vars_ = std::move(v);
    }
    return *vars_;
  }

  const ModelConfig& config_;
  ParamBinder& binder_;
  const Kg& kg_;
  std::optional<NeighborEncoderVars> vars_;
  std::map<EntityId, Var> cache_;
};

Tensor dropout_mask(std::size_t n, double rate, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ kDropoutStream);
  std::bernoulli_distribution keep(1.0 - rate);
  Tensor mask({n});
  for (std::size_t i = 0; i < n; ++i) mask[i] = keep(rng) ? 1.0 / (1.0 - rate) : 0.0;
  return mask;
}

AdaptVars perturbed(const AdaptVars& state, const AdaptValues& direction, double eps) {
  Tape& tape = *state.meta.tape;
  auto shift = [&](Var v, const Tensor& d) {
    Tensor s = d;
    s *= eps;
    return ops::add(v, tape.constant(std::move(s)));
  };
  AdaptVars out{shift(state.meta, direction.meta),
                shift(state.relation_projection, direction.relation_projection),
                {}};
  for (const auto& [e, v] : state.entity_projection) {
    out.entity_projection.emplace(e, shift(v, direction.entity_projection.at(e)));
  }
  return out;
}

double squared_norm(const AdaptValues& v) {
  double s = 0.0;
  auto add = [&](const Tensor& t) {
    for (double x : t.values()) s += x * x;
  };
  add(v.meta);
  add(v.relation_projection);
  for (const auto& [e, t] : v.entity_projection) add(t);
  return s;
}

}  // namespace

EpisodeOutput run_episode(const Model& model, const Kg& kg, const Episode& episode,
                          const EpisodeOptions& options) {
  const ModelConfig& config = model.config;
  if (episode.queries.empty()) fail_usage("no-queries", "a training episode needs at least one query");
  Tape tape;
  ParamBinder binder(tape, model.params, true);
  EnhancedEntities enhanced(config, binder, kg);
  const EntityFn semantic = [&](EntityId e) { return binder.row(param::entity_semantic, e); };

  MetaForward fwd = forward_meta(config, binder, episode.support, enhanced, semantic);
  Var meta = fwd.meta;
  if (options.dropout && config.dropout > 0.0) {
    meta = ops::mul(meta, tape.constant(dropout_mask(meta.value().size(), config.dropout, episode.seed)));
  }

  std::set<EntityId> entities;
  for (const auto* set : {&episode.support, &episode.queries}) {
    for (const auto& t : *set) {
      entities.insert(t.head);
      entities.insert(t.tail);
    }
  }
  entities.insert(episode.support_negatives.begin(), episode.support_negatives.end());
  entities.insert(episode.query_negatives.begin(), episode.query_negatives.end());

  ScoringInputs inputs;
  AdaptVars state{meta, binder.whole(param::relation_projection), {}};
  for (EntityId e : entities) {
    inputs.entities.emplace(e, combine_entity(enhanced(e), semantic(e)));
    state.entity_projection.emplace(e, binder.row(param::entity_projection, e));
  }
  inputs.state = &state;
  const Var support_loss = triple_margin_loss(inputs, episode.support, episode.support_negatives, config.margin);

  EpisodeOutput out;
  AdaptVars adapted;
  if (options.frozen_deltas != nullptr) {
    adapted = apply_deltas(state, *options.frozen_deltas);
    out.deltas = *options.frozen_deltas;
  } else {
    adapted = inner_update(support_loss, state, config.inner_lr, &out.deltas);
  }
  ScoringInputs query_inputs{inputs.entities, &adapted};
  const Var query_loss = triple_margin_loss(query_inputs, episode.queries, episode.query_negatives, config.margin);

  Var pool_loss;
  if (options.pool_tuning && config.uses_pool_tuning()) {
    std::mt19937_64 rng(episode.seed ^ kNegativeStream);
    const auto negatives = select_negatives(options.batch_prompts, *fwd.prompt_index, config.pool_negatives, rng);
    std::vector<Var> pairs, negative_rows;
    for (std::size_t i = 0; i < episode.support.size(); ++i) pairs.push_back(ops::row(fwd.semantic_pairs, i));
    for (auto j : negatives.indices) negative_rows.push_back(binder.row(param::pool, j));
    pool_loss = pool_tuning_loss(fwd.prompt, pairs, negative_rows, negatives.counts, config.temperature);
  }
  const Var total = total_loss(query_loss, pool_loss, config.pool_weight);

  out.support_loss = support_loss.value().item();
  out.query_loss = query_loss.value().item();
  out.pool_loss = pool_loss.valid() ? pool_loss.value().item() : 0.0;
  out.total = total.value().item();
  out.prompt_index = fwd.prompt_index;

  if (options.compute_gradient) {
    Var objective = total;
    if (config.second_order && options.frozen_deltas == nullptr && config.inner_lr > 0.0) {
      // Hessian-vector product of the support loss by central differences:
      // the inner step x' = x − l_r ∇L_S(x) contributes −l_r ∇θ(∇L_S·v)
      // with v = ∂L/∂x'.
      std::vector<Var> wrt{adapted.meta, adapted.relation_projection};
      for (const auto& [e, v] : adapted.entity_projection) wrt.push_back(v);
      auto grads = tape.gradients(total, wrt);
      AdaptValues v{std::move(grads[0]), std::move(grads[1]), {}};
      std::size_t k = 2;
      for (const auto& [e, var] : adapted.entity_projection) v.entity_projection.emplace(e, std::move(grads[k++]));
      const double norm = std::sqrt(squared_norm(v));
      if (norm > 0.0) {
        const double eps = 1e-4 / norm;
        const AdaptVars plus = perturbed(state, v, eps);
        const AdaptVars minus = perturbed(state, v, -eps);
        const Var loss_plus = triple_margin_loss({inputs.entities, &plus}, episode.support,
                                                 episode.support_negatives, config.margin);
        const Var loss_minus = triple_margin_loss({inputs.entities, &minus}, episode.support,
                                                  episode.support_negatives, config.margin);
        const Var correction = ops::scale(ops::sub(loss_plus, loss_minus), -config.inner_lr / (2.0 * eps));
        objective = ops::add(total, correction);
      }
    }
    out.gradient = binder.gradients(objective);
  }
  out.piece = tape.branch_fingerprint();
  return out;
}

std::optional<std::size_t> retrieval_index(const Model& model, std::span<const Triple> support) {
  if (!model.config.uses_pool()) return std::nullopt;
  Tape tape;
  ParamBinder binder(tape, model.params, false);
  const SelfAttentionVars attn{binder.whole(param::attention_query), binder.whole(param::attention_key),
                               binder.whole(param::attention_value)};
  const Var sem = task_embedding(
      attn, pair_matrix(support, [&](EntityId e) { return binder.row(param::entity_semantic, e); }));
  return retrieve_prompt(get_param(model.params, param::pool), sem.value().values());
}

Tensor encode_entities(const Model& model, const Kg& kg) {
  const Tensor& table = get_param(model.params, param::entity_relational);
  Tensor out = table;
  for (EntityId e = 0; e < table.rows(); ++e) {
    if (kg.neighbors(e).empty()) continue;
    Tape tape;
    ParamBinder binder(tape, model.params, false);
    EnhancedEntities enhanced(model.config, binder, kg);
    const Var v = enhanced(e);
    const auto src = v.value().values();
    std::copy(src.begin(), src.end(), out.row(e).begin());
  }
  return out;
}

SupportProblem support_problem(const Model& model, const Tensor& enhanced, std::span<const Triple> support,
                               std::span<const EntityId> support_negatives) {
  const ModelConfig& config = model.config;
  const Tensor& semantic_table = get_param(model.params, param::entity_semantic);
  const Tensor& projection_table = get_param(model.params, param::entity_projection);
  auto row_of = [](const Tensor& t, EntityId e) {
    const auto r = t.row(e);
    return Tensor::vector(std::vector<double>(r.begin(), r.end()));
  };

  Tape tape;
  ParamBinder binder(tape, model.params, false);
  const EntityFn relational = [&](EntityId e) { return tape.constant(row_of(enhanced, e)); };
  const EntityFn semantic = [&](EntityId e) { return binder.row(param::entity_semantic, e); };
  const MetaForward fwd = forward_meta(config, binder, support, relational, semantic);

  SupportProblem out;
  out.prompt_index = fwd.prompt_index;
  out.start = AdaptValues{fwd.meta.value(), get_param(model.params, param::relation_projection), {}};
  std::set<EntityId> entities(support_negatives.begin(), support_negatives.end());
  for (const auto& t : support) {
    entities.insert(t.head);
    entities.insert(t.tail);
  }
  std::map<EntityId, Tensor> combined;
  for (EntityId e : entities) {
    out.start.entity_projection.emplace(e, row_of(projection_table, e));
    Tensor c = row_of(enhanced, e);
    c += row_of(semantic_table, e);
    combined.emplace(e, std::move(c));
  }
  out.loss = [combined = std::move(combined), positives = std::vector<Triple>(support.begin(), support.end()),
              negatives = std::vector<EntityId>(support_negatives.begin(), support_negatives.end()),
              margin = config.margin](Tape& t, const AdaptVars& state) {
    ScoringInputs inputs;
    for (const auto& [e, value] : combined) inputs.entities.emplace(e, t.constant(value));
    inputs.state = &state;
    return triple_margin_loss(inputs, positives, negatives, margin);
  };
  return out;
}

AdaptedTask adapt_task(const Model& model, const Tensor& enhanced, std::span<const Triple> support,
                       std::span<const EntityId> support_negatives) {
  const SupportProblem problem = support_problem(model, enhanced, support, support_negatives);
  Tape tape;
  const AdaptVars state = as_leaves(tape, problem.start);
  const AdaptVars adapted = inner_update(problem.loss(tape, state), state, model.config.inner_lr);
  return AdaptedTask{values_of(adapted), problem.prompt_index};
}

double score_candidate(const Model& model, const Tensor& enhanced, const AdaptedTask& task, EntityId head,
                       EntityId tail) {
  const Tensor& semantic_table = get_param(model.params, param::entity_semantic);
  const Tensor& projection_table = get_param(model.params, param::entity_projection);
  const auto& rp = task.state.relation_projection.values();
  auto projected = [&](EntityId e) {
    Tensor x = Tensor::vector(std::vector<double>(enhanced.row(e).begin(), enhanced.row(e).end()));
    const auto s = semantic_table.row(e);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += s[i];
    const auto it = task.state.entity_projection.find(e);
    const auto ep = it != task.state.entity_projection.end() ? it->second.values() : projection_table.row(e);
    return project(x.values(), ep, rp);
  };
  return score_triple(projected(head).values(), task.state.meta.values(), projected(tail).values());
}

}  // namespace pmkg
