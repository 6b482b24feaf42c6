#pragma once

#include <vector>

#include "pmkg/kg/kg.hpp"
#include "pmkg/model/config.hpp"
#include "pmkg/numerics/mlp.hpp"

namespace pmkg {

// Neighbor tuples of one entity with their [relation ; entity] vectors
// (|N_e| × 2d). Empty when the entity has no indexed neighbors.
struct NeighborBatch {
  std::vector<Neighbor> tuples;
  Tensor embeddings;

  std::size_t size() const noexcept { return tuples.size(); }
  bool empty() const noexcept { return tuples.empty(); }
};

NeighborBatch encode_neighbors(const Kg& kg, EntityId e, const Tensor& entity_table,
                               const Tensor& relation_table);

struct NeighborEncoderVars {
  Var query;   // W_q, d × d_k
  Var key;     // W_k, 2d × d_k
  MlpVars score;      // g_n, 2d_k → 1 (concat scoring only)
  MlpVars transform;  // f_n, 2d → d → d
  AttentionScore mode = AttentionScore::concat;
};

// Softmax-normalised attention over a non-empty batch. `query_input` is the
// target entity (d) or one row per neighbor (|N_e| × d).
Var attention_weights(const NeighborEncoderVars& enc, Var query_input, Var batch);
// Same, reading the neighbor vectors from an encoded batch (as constants).
Var attention_weights(const NeighborEncoderVars& enc, Var query_input, const NeighborBatch& batch);

// e' = f_n(Σ a_i n_i) + e
Var aggregate(const NeighborEncoderVars& enc, Var entity, Var batch, Var weights);

}  // namespace pmkg
