#include "pmkg/model/neighbor_encoder.hpp"

#include <cmath>

#include "pmkg/error.hpp"
#include "pmkg/numerics/ops.hpp"

namespace pmkg {

NeighborBatch encode_neighbors(const Kg& kg, EntityId e, const Tensor& entity_table,
                               const Tensor& relation_table) {
  NeighborBatch batch;
  const auto neighbors = kg.neighbors(e);
  batch.tuples.assign(neighbors.begin(), neighbors.end());
  if (batch.empty()) return batch;
  const std::size_t d = entity_table.cols();
  if (relation_table.cols() != d) fail_numeric("dim-mismatch", "relation and entity tables differ in width");
  batch.embeddings = Tensor({batch.size(), 2 * d});
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto r = relation_table.row(batch.tuples[i].relation);
    const auto x = entity_table.row(batch.tuples[i].entity);
    auto out = batch.embeddings.row(i);
    std::copy(r.begin(), r.end(), out.begin());
    std::copy(x.begin(), x.end(), out.begin() + static_cast<std::ptrdiff_t>(d));
  }
  return batch;
}

Var attention_weights(const NeighborEncoderVars& enc, Var query_input, Var batch) {
  const Tensor& nb = batch.value();
  if (!nb.is_matrix() || nb.rows() == 0) fail_numeric("no-neighbors", "attention over an empty neighborhood");
  const std::size_t n = nb.rows();
  Var q = ops::matmul(query_input, enc.query);
  const bool per_neighbor = q.value().is_matrix();
  if (per_neighbor && q.value().rows() != n) fail_numeric("dim-mismatch", "one query row per neighbor expected");
  const Var k = ops::matmul(batch, enc.key);
  const std::size_t dk = k.value().cols();

  Var logits;
  if (enc.mode == AttentionScore::concat) {
    const Var queries = per_neighbor ? q : ops::repeat_rows(q, n);
    logits = mlp_forward(enc.score, ops::concat_cols(queries, k));
  } else {
    Var raw;
    if (per_neighbor) {
      const Var ones = batch.tape->constant(Tensor({dk, 1}, 1.0));
      raw = ops::matmul(ops::mul(q, k), ones);
    } else {
      raw = ops::matmul(k, ops::reshape(q, {dk, 1}));
    }
    logits = ops::scale(raw, 1.0 / std::sqrt(static_cast<double>(dk)));
  }
  return ops::softmax(ops::reshape(logits, {n}));
}

Var attention_weights(const NeighborEncoderVars& enc, Var query_input, const NeighborBatch& batch) {
  if (batch.empty()) fail_numeric("no-neighbors", "attention over an empty neighborhood");
  return attention_weights(enc, query_input, query_input.tape->constant(batch.embeddings));
}

Var aggregate(const NeighborEncoderVars& enc, Var entity, Var batch, Var weights) {
  const Var pooled = ops::matmul(weights, batch);
  return ops::add(mlp_forward(enc.transform, pooled), entity);
}

}  // namespace pmkg
