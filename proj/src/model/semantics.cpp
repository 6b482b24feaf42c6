#include "pmkg/model/semantics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pmkg/error.hpp"
#include "pmkg/numerics/ops.hpp"

namespace pmkg {

Var task_embedding(const SelfAttentionVars& attn, Var pairs) {
  const Tensor& p = pairs.value();
  if (!p.is_matrix() || p.rows() == 0) fail_numeric("no-support", "task embedding needs at least one pair");
  const Var q = ops::matmul(pairs, attn.query);
  const Var k = ops::matmul(pairs, attn.key);
  const Var v = ops::matmul(pairs, attn.value);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(k.value().cols()));
  const Var weights = ops::softmax_rows(ops::scale(ops::matmul_bt(q, k), inv_sqrt));
  return ops::mean_rows(ops::matmul(weights, v));
}

std::size_t retrieve_prompt(const Tensor& pool, std::span<const double> s) {
  if (!pool.is_matrix() || pool.rows() == 0) fail_numeric("empty-pool");
  if (pool.cols() != s.size()) fail_numeric("dim-mismatch", "prompt and pool widths differ");
  const double s_norm = l2_norm(s);
  if (s_norm == 0.0) fail_numeric("zero-vector", "task semantic embedding is zero");
  std::size_t best = 0;
  double best_sim = -2.0;
  for (std::size_t j = 0; j < pool.rows(); ++j) {
    const auto row = pool.row(j);
    const double n = l2_norm(row);
    const double sim = n == 0.0 ? -1.0 : dot(row, s) / (n * s_norm);
    if (sim > best_sim) {
      best_sim = sim;
      best = j;
    }
  }
  return best;
}

double PromptNegatives::total() const { return std::accumulate(counts.begin(), counts.end(), 0.0); }

PromptNegatives select_negatives(std::span<const std::size_t> batch_prompts, std::size_t own,
                                 std::size_t wanted, std::mt19937_64& rng) {
  std::vector<std::size_t> distinct;
  for (auto idx : batch_prompts) {
    if (idx != own) distinct.push_back(idx);
  }
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  PromptNegatives out;
  if (wanted == 0 || distinct.empty()) return out;
  if (distinct.size() >= wanted) {
    std::shuffle(distinct.begin(), distinct.end(), rng);
    distinct.resize(wanted);
    std::sort(distinct.begin(), distinct.end());
    out.indices = distinct;
    out.counts.assign(distinct.size(), 1.0);
    return out;
  }
  out.indices = distinct;
  out.counts.assign(distinct.size(), 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, distinct.size() - 1);
  for (std::size_t extra = distinct.size(); extra < wanted; ++extra) out.counts[pick(rng)] += 1.0;
  return out;
}

Var pool_tuning_loss(Var prompt, const std::vector<Var>& pairs, const std::vector<Var>& negatives,
                     std::span<const double> counts, double temperature) {
  if (pairs.empty()) fail_numeric("no-support", "pool tuning needs at least one pair");
  if (!(temperature > 0.0)) fail_numeric("bad-temperature");
  if (negatives.size() != counts.size()) fail_numeric("length-mismatch", "negatives and counts");
  Tape& tape = *prompt.tape;
  const double inv_tau = 1.0 / temperature;

  std::vector<Var> negative_logits;
  if (!negatives.empty()) {
    std::vector<Var> sims;
    for (const auto& n : negatives) sims.push_back(ops::cosine(prompt, n));
    Tensor log_counts({counts.size()});
    for (std::size_t j = 0; j < counts.size(); ++j) {
      if (!(counts[j] > 0.0)) fail_numeric("bad-count", "negative multiplicities must be positive");
      log_counts[j] = std::log(counts[j]);
    }
    negative_logits.push_back(ops::add(ops::scale(ops::concat(sims), inv_tau), tape.constant(log_counts)));
  }

  std::vector<Var> terms;
  for (const auto& pair : pairs) {
    const Var a = ops::scale(ops::cosine(prompt, pair), inv_tau);
    if (negatives.empty()) {
      // −a + log(e^a) is exactly zero; keep it on the tape for uniformity.
      terms.push_back(ops::sub(a, a));
      continue;
    }
    std::vector<Var> parts{a};
    parts.insert(parts.end(), negative_logits.begin(), negative_logits.end());
    terms.push_back(ops::sub(ops::logsumexp(ops::concat(parts)), a));
  }
  return ops::scale(ops::add_n(terms), 1.0 / static_cast<double>(pairs.size()));
}

Tensor pool_update(const Tensor& pool, const Tensor& gradient, double lr) {
  require_same_shape(pool, gradient, "pool_update");
  Tensor out = pool;
  out.axpy(-lr, gradient);
  return out;
}

}  // namespace pmkg
