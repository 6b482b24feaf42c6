#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "pmkg/numerics/tape.hpp"

namespace pmkg {

// Single-head f_sa; the same instance serves semantic and relational pairs.
struct SelfAttentionVars {
  Var query;  // D × D
  Var key;    // D × D
  Var value;  // D × D
};

// Scaled dot-product self-attention over the K rows of `pairs`, mean-pooled
// to one D-vector. Used for both s_r and r_r.
Var task_embedding(const SelfAttentionVars& attn, Var pairs);

// argmax_j cos(s, pool_j); ties go to the lowest index.
std::size_t retrieve_prompt(const Tensor& pool, std::span<const double> s);

// Distinct negative prompt rows with how often each was drawn.
struct PromptNegatives {
  std::vector<std::size_t> indices;
  std::vector<double> counts;

  double total() const;
};

// Negatives from the prompts other tasks of the batch retrieved, excluding
// `own`. Every distinct prompt is used once; when there are fewer than
// `wanted` the remainder is drawn with replacement, when there are more a
// uniform subset of size `wanted` is kept.
PromptNegatives select_negatives(std::span<const std::size_t> batch_prompts, std::size_t own,
                                 std::size_t wanted, std::mt19937_64& rng);

// (1/K) Σ_i −log( e^{a_i} / (e^{a_i} + Σ_j c_j e^{b_j}) ) with
// a_i = cos(p, pair_i)/τ and b_j = cos(p, negative_j)/τ.
Var pool_tuning_loss(Var prompt, const std::vector<Var>& pairs, const std::vector<Var>& negatives,
                     std::span<const double> counts, double temperature);

// Plain gradient step on the pool: pool − lr·grad.
Tensor pool_update(const Tensor& pool, const Tensor& gradient, double lr);

}  // namespace pmkg
