#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "pmkg/error.hpp"
#include "pmkg/model/fusion.hpp"
#include "pmkg/model/neighbor_encoder.hpp"
#include "pmkg/model/scorer.hpp"
#include "pmkg/model/semantics.hpp"
#include "pmkg/numerics/ops.hpp"
#include "test_support.hpp"

using namespace pmkg;
using pmkg::testing::check_graph;
using pmkg::testing::random_tensor;
namespace oc = pmkg::oracle;

namespace {

MlpVars bind_mlp(Tape& tape, const MlpParams& p) {
  MlpVars v;
  v.slope = p.slope;
  v.activate_output = p.activate_output;
  for (const auto& l : p.layers) v.layers.emplace_back(tape.constant(l.weight), tape.constant(l.bias));
  return v;
}

MlpParams zero_mlp(std::vector<std::size_t> dims, bool activate, double bias_value) {
  std::mt19937_64 rng(0);
  MlpParams p = make_mlp(dims, 0.01, activate, rng);
  for (auto& l : p.layers) {
    for (auto& w : l.weight.values()) w = 0.0;
    for (auto& b : l.bias.values()) b = bias_value;
  }
  return p;
}

struct EncoderParams {
  Tensor query, key;
  MlpParams score, transform;
};

EncoderParams random_encoder(std::size_t d, std::size_t dk, std::mt19937_64& rng) {
  EncoderParams p{random_tensor({d, dk}, rng, 0.5), random_tensor({2 * d, dk}, rng, 0.5),
                  make_mlp({2 * dk, 1}, 0.01, true, rng), make_mlp({2 * d, d, d}, 0.01, false, rng)};
  for (auto* m : {&p.score, &p.transform})
    for (auto& l : m->layers) l.bias = random_tensor(l.bias.shape(), rng, 0.3);
  return p;
}

NeighborEncoderVars bind_encoder(Tape& tape, const EncoderParams& p, AttentionScore mode = AttentionScore::concat) {
  return {tape.constant(p.query), tape.constant(p.key), bind_mlp(tape, p.score), bind_mlp(tape, p.transform),
          mode};
}

// Oracle attention: concat scoring with the target entity as query.
oc::Vec oracle_attention(const EncoderParams& p, const oc::Vec& e, const Tensor& batch) {
  const oc::Vec q = oc::vecmat(e, p.query);
  oc::Vec logits;
  for (std::size_t i = 0; i < batch.rows(); ++i) {
    const oc::Vec k = oc::vecmat(oc::row(batch, i), p.key);
    logits.push_back(oc::mlp(p.score, oc::cat(q, k))[0]);
  }
  return oc::softmax(logits);
}

oc::Vec oracle_aggregate(const EncoderParams& p, const oc::Vec& e, const Tensor& batch) {
  const oc::Vec a = oracle_attention(p, e, batch);
  oc::Vec pooled(batch.cols(), 0.0);
  for (std::size_t i = 0; i < batch.rows(); ++i)
    for (std::size_t j = 0; j < batch.cols(); ++j) pooled[j] += a[i] * batch.at(i, j);
  return oc::plus(oc::mlp(p.transform, pooled), e);
}

Tensor permute_rows(const Tensor& m, const std::vector<std::size_t>& order) {
  Tensor out(m.shape());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto src = m.row(order[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace

TEST_CASE("encode_neighbors") {
  Vocabulary ents, rels;
  for (auto n : {"a", "b", "c", "lonely"}) ents.intern(n);
  for (auto n : {"r", "s"}) rels.intern(n);
  std::mt19937_64 rng(1);
  const Kg kg = build_neighbor_index(Kg(ents, rels, {{0, 0, 1}, {2, 1, 0}, {1, 0, 2}}), 50, rng);
  const Tensor ent = random_tensor({4, 3}, rng);
  const Tensor rel = random_tensor({2, 3}, rng);

  CHECK(encode_neighbors(kg, 3, ent, rel).empty());
  const auto batch = encode_neighbors(kg, 0, ent, rel);
  REQUIRE(batch.size() == 2);
  // a: (r, b) outgoing, then (s, c) incoming.
  CHECK(oc::row(batch.embeddings, 0) == oc::cat(oc::row(rel, 0), oc::row(ent, 1)));
  CHECK(oc::row(batch.embeddings, 1) == oc::cat(oc::row(rel, 1), oc::row(ent, 2)));
  CHECK(batch.tuples[1].direction == Direction::in);
}

TEST_CASE("attention weights") {
  std::mt19937_64 rng(11);
  const std::size_t d = 3, dk = 4;
  const auto params = random_encoder(d, dk, rng);

  SUBCASE("singleton and duplicate neighborhoods") {
    Tape tape;
    const auto enc = bind_encoder(tape, params);
    const Var e = tape.constant(random_tensor({d}, rng));
    const Tensor one = random_tensor({1, 2 * d}, rng);
    CHECK(attention_weights(enc, e, tape.constant(one)).value()[0] == 1.0);
    const Tensor two({2, 2 * d}, oc::cat(oc::to_vec(one), oc::to_vec(one)));
    const auto w = attention_weights(enc, e, tape.constant(two)).value();
    CHECK(w[0] == 0.5);
    CHECK(w[1] == 0.5);
  }
  SUBCASE("empty neighborhood is an error") {
    Tape tape;
    const auto enc = bind_encoder(tape, params);
    CHECK_THROWS_WITH_AS(attention_weights(enc, tape.constant(Tensor({d})), NeighborBatch{}),
                         doctest::Contains("no-neighbors"), Error);
  }
  SUBCASE("random four-neighbor case matches the oracle") {
    for (int trial = 0; trial < 20; ++trial) {
      Tape tape;
      const auto enc = bind_encoder(tape, params);
      const Tensor e = random_tensor({d}, rng);
      const Tensor batch = random_tensor({4, 2 * d}, rng);
      const auto w = attention_weights(enc, tape.constant(e), tape.constant(batch)).value();
      CHECK(oc::max_abs_diff(oc::to_vec(w), oracle_attention(params, oc::to_vec(e), batch)) <= 1e-12);
      CHECK(std::abs(std::accumulate(w.values().begin(), w.values().end(), 0.0) - 1.0) <= 1e-12);
    }
  }
  SUBCASE("dot scoring and per-neighbor queries") {
    Tape tape;
    const Tensor e = random_tensor({d}, rng);
    const Tensor batch = random_tensor({4, 2 * d}, rng);
    const auto dot_w = attention_weights(bind_encoder(tape, params, AttentionScore::dot), tape.constant(e),
                                         tape.constant(batch)).value();
    const oc::Vec q = oc::vecmat(oc::to_vec(e), params.query);
    oc::Vec logits, nlogits;
    Tensor ent_rows({4, d});
    for (std::size_t i = 0; i < 4; ++i) {
      const oc::Vec k = oc::vecmat(oc::row(batch, i), params.key);
      logits.push_back(oc::dotp(q, k) / 2.0);
      const oc::Vec ent(batch.row(i).begin() + d, batch.row(i).end());
      std::copy(ent.begin(), ent.end(), ent_rows.row(i).begin());
      nlogits.push_back(oc::mlp(params.score, oc::cat(oc::vecmat(ent, params.query), k))[0]);
    }
    CHECK(oc::max_abs_diff(oc::to_vec(dot_w), oc::softmax(logits)) <= 1e-12);
    const auto nw = attention_weights(bind_encoder(tape, params), tape.constant(ent_rows), tape.constant(batch)).value();
    CHECK(oc::max_abs_diff(oc::to_vec(nw), oc::softmax(nlogits)) <= 1e-12);
  }
}

TEST_CASE("aggregate") {
  std::mt19937_64 rng(12);
  const std::size_t d = 3, dk = 3;
  auto params = random_encoder(d, dk, rng);

  SUBCASE("zero f_n leaves the residual only") {
    EncoderParams zeroed = params;
    zeroed.transform = zero_mlp({2 * d, d, d}, false, 0.0);
    Tape tape;
    const auto enc = bind_encoder(tape, zeroed);
    const Var e = tape.constant(random_tensor({d}, rng));
    const Var batch = tape.constant(random_tensor({3, 2 * d}, rng));
    CHECK(aggregate(enc, e, batch, attention_weights(enc, e, batch)).value() == e.value());
  }
  SUBCASE("random case, permutation and duplication invariance") {
    for (int trial = 0; trial < 20; ++trial) {
      const Tensor e = random_tensor({d}, rng);
      const Tensor batch = random_tensor({5, 2 * d}, rng);
      auto run = [&](const Tensor& b) {
        Tape tape;
        const auto enc = bind_encoder(tape, params);
        const Var ev = tape.constant(e);
        const Var bv = tape.constant(b);
        return oc::to_vec(aggregate(enc, ev, bv, attention_weights(enc, ev, bv)).value());
      };
      const auto base = run(batch);
      CHECK(oc::max_abs_diff(base, oracle_aggregate(params, oc::to_vec(e), batch)) <= 1e-12);
      std::vector<std::size_t> order{3, 0, 4, 1, 2};
      CHECK(oc::max_abs_diff(base, run(permute_rows(batch, order))) <= 1e-12);
      Tensor doubled({10, 2 * d});
      for (std::size_t i = 0; i < 10; ++i) {
        const auto src = batch.row(i % 5);
        std::copy(src.begin(), src.end(), doubled.row(i).begin());
      }
      CHECK(oc::max_abs_diff(base, run(doubled)) <= 1e-12);
    }
  }
  SUBCASE("gradients through the aggregator") {
    const Tensor batch = random_tensor({4, 2 * d}, rng);
    std::vector<Tensor> inputs{random_tensor({d}, rng), params.query, params.key,
                               params.transform.layers[0].weight, params.transform.layers[1].weight,
                               params.transform.layers[1].bias, params.score.layers[0].weight};
    const auto report = check_graph(
        [&](Tape& tape, const std::vector<Var>& v) {
          NeighborEncoderVars enc{v[1], v[2], bind_mlp(tape, params.score), bind_mlp(tape, params.transform),
                                  AttentionScore::concat};
          enc.transform.layers[0].first = v[3];
          enc.transform.layers[1].first = v[4];
          enc.transform.layers[1].second = v[5];
          enc.score.layers[0].first = v[6];
          const Var b = tape.constant(batch);
          const Var out = aggregate(enc, v[0], b, attention_weights(enc, v[0], b));
          return ops::sum(ops::mul(out, out));
        },
        inputs);
    CHECK(report.max_relative_error <= 1e-4);
    CHECK(report.checked > 0);
  }
}

TEST_CASE("task embedding") {
  std::mt19937_64 rng(21);
  const std::size_t D = 6;
  const Tensor wq = random_tensor({D, D}, rng, 0.4), wk = random_tensor({D, D}, rng, 0.4),
               wv = random_tensor({D, D}, rng, 0.4);
  auto run = [&](const Tensor& pairs) {
    Tape tape;
    const SelfAttentionVars attn{tape.constant(wq), tape.constant(wk), tape.constant(wv)};
    return oc::to_vec(task_embedding(attn, tape.constant(pairs)).value());
  };
  const Tensor single = random_tensor({1, D}, rng);
  CHECK(oc::max_abs_diff(run(single), oc::vecmat(oc::row(single, 0), wv)) <= 1e-14);
  const Tensor twice({2, D}, oc::cat(oc::to_vec(single), oc::to_vec(single)));
  CHECK(oc::max_abs_diff(run(twice), run(single)) <= 1e-14);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor pairs = random_tensor({5, D}, rng);
    std::vector<oc::Vec> rows;
    for (std::size_t i = 0; i < 5; ++i) rows.push_back(oc::row(pairs, i));
    CHECK(oc::max_abs_diff(run(pairs), oc::attention_pool(rows, wq, wk, wv)) <= 1e-12);
  }
  Tape tape;
  const SelfAttentionVars attn{tape.constant(wq), tape.constant(wk), tape.constant(wv)};
  CHECK_THROWS_AS(task_embedding(attn, tape.constant(Tensor({0}, std::vector<double>{}))), Error);
}

TEST_CASE("prompt retrieval") {
  std::mt19937_64 rng(31);
  auto brute = [](const Tensor& pool, const oc::Vec& s) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < pool.rows(); ++j) {
      if (oc::cosine(oc::row(pool, j), s) > oc::cosine(oc::row(pool, best), s)) best = j;
    }
    return best;
  };
  const Tensor s = random_tensor({8}, rng);
  CHECK(retrieve_prompt(random_tensor({1, 8}, rng), s.values()) == 0);

  Tensor pool = random_tensor({64, 8}, rng);
  std::copy(s.values().begin(), s.values().end(), pool.row(40).begin());
  CHECK(retrieve_prompt(pool, s.values()) == 40);

  for (int trial = 0; trial < 200; ++trial) {
    Tensor p = random_tensor({64, 8}, rng);
    // Duplicate a row so exact ties occur regularly.
    const auto src = p.row(trial % 64);
    std::copy(src.begin(), src.end(), p.row(63).begin());
    const Tensor q = random_tensor({8}, rng);
    const auto idx = retrieve_prompt(p, q.values());
    CHECK(idx == brute(p, oc::to_vec(q)));
    Tensor scaled = q;
    scaled *= 0.001 + 37.0 * trial;
    CHECK(retrieve_prompt(p, scaled.values()) == idx);
  }
  CHECK_THROWS_WITH_AS(retrieve_prompt(pool, Tensor({8}).values()), doctest::Contains("zero-vector"), Error);
}

TEST_CASE("negative prompt selection") {
  std::mt19937_64 rng(41);
  const std::vector<std::size_t> batch{3, 5, 5, 7, 3, 9};
  const auto few = select_negatives(batch, 3, 10, rng);
  CHECK(few.indices == std::vector<std::size_t>{5, 7, 9});
  CHECK(few.total() == 10.0);
  const auto many = select_negatives(batch, 3, 2, rng);
  CHECK(many.indices.size() == 2);
  CHECK(many.total() == 2.0);
  CHECK(std::find(many.indices.begin(), many.indices.end(), 3) == many.indices.end());
  CHECK(select_negatives(batch, 3, 0, rng).indices.empty());
  CHECK(select_negatives(std::vector<std::size_t>{3, 3}, 3, 5, rng).indices.empty());
}

TEST_CASE("pool tuning loss") {
  std::mt19937_64 rng(51);
  const std::size_t D = 6;
  auto eval = [&](const Tensor& prompt, const std::vector<Tensor>& pairs, const std::vector<Tensor>& negs,
                  const std::vector<double>& counts, double tau) {
    Tape tape;
    std::vector<Var> pv, nv;
    for (const auto& p : pairs) pv.push_back(tape.constant(p));
    for (const auto& n : negs) nv.push_back(tape.constant(n));
    return pool_tuning_loss(tape.constant(prompt), pv, nv, counts, tau).value().item();
  };
  const Tensor prompt = random_tensor({D}, rng);
  const std::vector<Tensor> pairs{random_tensor({D}, rng), random_tensor({D}, rng)};

  CHECK(eval(prompt, pairs, {}, {}, 0.1) == 0.0);

  SUBCASE("uniform similarities give log(N+1)") {
    for (std::size_t n : {1u, 3u, 1024u}) {
      // Every vector equal to the prompt: all cosines are 1.
      CHECK(std::abs(eval(prompt, {prompt, prompt}, {prompt}, {double(n)}, 0.1) - std::log(n + 1.0)) <= 1e-9);
    }
  }
  SUBCASE("direct formula on random instances") {
    for (int trial = 0; trial < 100; ++trial) {
      const Tensor p = random_tensor({D}, rng);
      const std::vector<Tensor> pr{random_tensor({D}, rng), random_tensor({D}, rng)};
      std::vector<Tensor> negs{random_tensor({D}, rng), random_tensor({D}, rng), random_tensor({D}, rng)};
      const double tau = 0.05 + 0.5 * (trial % 7) / 7.0;
      std::vector<oc::Vec> pv{oc::to_vec(pr[0]), oc::to_vec(pr[1])};
      std::vector<oc::Vec> nv{oc::to_vec(negs[0]), oc::to_vec(negs[1]), oc::to_vec(negs[2])};
      const double expected = oc::info_nce(oc::to_vec(p), pv, nv, tau);
      CHECK(std::abs(eval(p, pr, negs, {1, 1, 1}, tau) - expected) <= 1e-10);
      // Multiplicities equal repeated negatives; order does not matter.
      std::vector<oc::Vec> repeated{nv[0], nv[0], nv[2], nv[1], nv[1], nv[1]};
      CHECK(std::abs(eval(p, {pr[1], pr[0]}, {negs[2], negs[0], negs[1]}, {1, 2, 3}, tau) -
                     oc::info_nce(oc::to_vec(p), pv, repeated, tau)) <= 1e-10);
    }
  }
  SUBCASE("non-negative and vanishing with a large gap") {
    for (int trial = 0; trial < 50; ++trial) {
      const Tensor p = random_tensor({D}, rng);
      CHECK(eval(p, pairs, {random_tensor({D}, rng)}, {4}, 0.2) >= 0.0);
    }
    Tensor opposite = prompt;
    opposite *= -1.0;
    CHECK(eval(prompt, {prompt}, {opposite}, {1}, 0.01) < 1e-80);
  }
  SUBCASE("gradient matches finite differences") {
    const auto report = check_graph(
        [&](Tape&, const std::vector<Var>& v) {
          return pool_tuning_loss(v[0], {v[1], v[2]}, {v[3], v[4]}, std::vector<double>{2, 1}, 0.3);
        },
        {prompt, pairs[0], pairs[1], random_tensor({D}, rng), random_tensor({D}, rng)});
    CHECK(report.max_relative_error <= 1e-4);
  }
}

TEST_CASE("pool update") {
  std::mt19937_64 rng(61);
  const Tensor pool = random_tensor({4, 6}, rng);
  CHECK(pool_update(pool, Tensor::zeros_like(pool), 0.1) == pool);

  // One descent step on L_pt through the selected and negative rows.
  const Tensor pair_value = random_tensor({6}, rng);
  auto loss_and_grad = [&](const Tensor& p) {
    Tape tape;
    const Var leaf = tape.leaf(p);
    const Var selected = ops::row(leaf, 1);
    const Var pair = tape.constant(pair_value);
    const Var l = pool_tuning_loss(selected, {pair}, {ops::row(leaf, 2)}, std::vector<double>{3}, 0.1);
    return std::make_pair(l.value().item(), tape.gradients(l, std::vector<Var>{leaf}).front());
  };
  const auto [before, grad] = loss_and_grad(pool);
  for (std::size_t j : {0u, 3u})
    for (double g : grad.row(j)) CHECK(g == 0.0);
  const auto [after, unused] = loss_and_grad(pool_update(pool, grad, 1e-3));
  CHECK(after < before);
}

TEST_CASE("fusion prompt and fuse") {
  std::mt19937_64 rng(71);
  const std::size_t d = 3;
  const Tensor s = random_tensor({2 * d}, rng), r = random_tensor({2 * d}, rng), p = random_tensor({2 * d}, rng);

  SUBCASE("fusion prompt") {
    const MlpParams zero = zero_mlp({4 * d, d}, true, 0.7);
    Tape tape;
    CHECK(make_fusion_prompt(bind_mlp(tape, zero), tape.constant(s), tape.constant(r)).value() ==
          Tensor({d}, 0.7));
    const MlpParams g = make_mlp({4 * d, d}, 0.01, true, rng);
    const auto a = make_fusion_prompt(bind_mlp(tape, g), tape.constant(s), tape.constant(r)).value();
    const auto b = make_fusion_prompt(bind_mlp(tape, g), tape.constant(s), tape.constant(r)).value();
    CHECK(a == b);
    CHECK(oc::max_abs_diff(oc::to_vec(a), oc::mlp(g, oc::cat(oc::to_vec(s), oc::to_vec(r)))) <= 1e-14);
  }
  SUBCASE("fuse") {
    const MlpParams f = make_mlp({5 * d, d, d}, 0.01, false, rng);
    const Tensor fp = random_tensor({d}, rng);
    Tape tape;
    const auto zero = fuse(bind_mlp(tape, zero_mlp({5 * d, d, d}, false, -0.25)), tape.constant(r),
                           tape.constant(p), tape.constant(fp));
    CHECK(zero.value() == Tensor({d}, -0.25));

    const auto full = fuse(bind_mlp(tape, f), tape.constant(r), tape.constant(p), tape.constant(fp)).value();
    CHECK(oc::max_abs_diff(oc::to_vec(full), oc::mlp(f, oc::cat(oc::cat(oc::to_vec(r), oc::to_vec(p)), oc::to_vec(fp)))) <= 1e-14);

    // Semantic ablation: no prompt, no fusion prompt → a function of r_r alone.
    const auto ablated = fuse(bind_mlp(tape, f), tape.constant(r), Var{}, Var{}).value();
    CHECK(oc::max_abs_diff(oc::to_vec(ablated), oc::mlp(f, oc::cat(oc::to_vec(r), oc::Vec(3 * d, 0.0)))) <= 1e-14);

    CHECK_THROWS_AS(fuse(bind_mlp(tape, f), tape.constant(Tensor({d})), Var{}, Var{}), Error);
  }
  SUBCASE("Lipschitz-style continuity and a live prompt path") {
    const MlpParams f = make_mlp({5 * d, d, d}, 0.01, false, rng);
    const Tensor fp = random_tensor({d}, rng);
    auto run = [&](const Tensor& pp) {
      Tape tape;
      return oc::to_vec(fuse(bind_mlp(tape, f), tape.constant(r), tape.constant(pp), tape.constant(fp)).value());
    };
    const auto base = run(p);
    for (double delta : {1e-2, 1e-4, 1e-6}) {
      Tensor moved = p;
      for (auto& v : moved.values()) v += delta;
      const double change = oc::max_abs_diff(run(moved), base);
      CHECK(change <= 50.0 * delta);
    }
    const auto report = check_graph(
        [&](Tape& tape, const std::vector<Var>& v) {
          return ops::sum(fuse(bind_mlp(tape, f), tape.constant(r), v[0], tape.constant(fp)));
        },
        {p});
    CHECK(report.max_relative_error <= 1e-4);
    Tape tape;
    const Var pv = tape.leaf(p);
    const auto g = tape.gradients(ops::sum(fuse(bind_mlp(tape, f), tape.constant(r), pv, tape.constant(fp))),
                                  std::vector<Var>{pv}).front();
    CHECK(oc::norm(oc::to_vec(g)) > 0.0);
  }
}

TEST_CASE("projection and scoring") {
  std::mt19937_64 rng(81);
  const std::size_t d = 4;
  const Tensor e = random_tensor({d}, rng), ep = random_tensor({d}, rng), rp = random_tensor({d}, rng);
  CHECK(project(e.values(), Tensor({d}).values(), rp.values()) == e);
  CHECK(project(e.values(), ep.values(), Tensor({d}).values()) == e);

  // (r_p e_pᵀ + I) e built as an explicit matrix.
  oc::Vec expected(d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) expected[i] += (rp[i] * ep[j] + (i == j ? 1.0 : 0.0)) * e[j];
  CHECK(oc::max_abs_diff(oc::to_vec(project(e.values(), ep.values(), rp.values())), expected) <= 1e-14);
  Tape tape;
  CHECK(oc::max_abs_diff(oc::to_vec(project(tape.constant(e), tape.constant(ep), tape.constant(rp)).value()),
                         expected) <= 1e-14);

  const Tensor sem = random_tensor({d}, rng);
  CHECK(combine_entity(tape.constant(e), tape.constant(Tensor({d}))).value() == e);
  CHECK(combine_entity(tape.constant(Tensor({d})), tape.constant(Tensor({d}))).value() == Tensor({d}));
  CHECK(oc::to_vec(combine_entity(tape.constant(e), tape.constant(sem)).value()) == oc::plus(oc::to_vec(e), oc::to_vec(sem)));
  CHECK_THROWS_AS(combine_entity(tape.constant(e), tape.constant(Tensor({d + 1}))), Error);

  const Tensor h = random_tensor({d}, rng), t = random_tensor({d}, rng);
  Tensor mr = t;
  mr -= h;
  CHECK(score_triple(h.values(), mr.values(), t.values()) <= 1e-15);
  CHECK(score_triple(h.values(), Tensor({d}).values(), h.values()) == 0.0);
  const Tensor m2 = random_tensor({d}, rng);
  oc::Vec resid(d);
  for (std::size_t i = 0; i < d; ++i) resid[i] = h[i] + m2[i] - t[i];
  CHECK(std::abs(score_triple(h.values(), m2.values(), t.values()) - oc::norm(resid)) <= 1e-14);
  CHECK(score_triple(tape.constant(h), tape.constant(m2), tape.constant(t)).value().item() ==
        doctest::Approx(oc::norm(resid)).epsilon(1e-14));
}

TEST_CASE("margin loss") {
  const std::vector<double> pos{0.5, 1.0, 2.0};
  CHECK(margin_loss(pos, std::vector<double>{1.5, 2.0, 3.5}, 1.0) == 0.0);
  CHECK(margin_loss(pos, pos, 1.0) == 3.0);
  CHECK_THROWS_WITH_AS(margin_loss(pos, std::vector<double>{1.0}, 1.0), doctest::Contains("length-mismatch"), Error);

  std::mt19937_64 rng(91);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> p(6), n(6);
    double expected = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
      p[i] = u(rng);
      n[i] = u(rng);
      expected += std::max(0.0, p[i] + 1.0 - n[i]);
    }
    CHECK(margin_loss(p, n, 1.0) == doctest::Approx(expected).epsilon(1e-14));
    // Shift both sides by the same constant.
    const double c = u(rng) - 1.5;
    auto shifted_p = p, shifted_n = n;
    for (auto& v : shifted_p) v += c;
    for (auto& v : shifted_n) v += c;
    CHECK(margin_loss(shifted_p, shifted_n, 1.0) == doctest::Approx(expected).epsilon(1e-12));

    Tape tape;
    std::vector<Var> pv, nv;
    for (std::size_t i = 0; i < 6; ++i) {
      pv.push_back(tape.constant(Tensor::scalar(p[i])));
      nv.push_back(tape.constant(Tensor::scalar(n[i])));
    }
    CHECK(margin_loss(pv, nv, 1.0).value().item() == doctest::Approx(expected).epsilon(1e-14));
  }
}

TEST_CASE("inner update") {
  std::mt19937_64 rng(101);
  const std::size_t d = 3;
  AdaptValues start{random_tensor({d}, rng), random_tensor({d}, rng), {}};
  start.entity_projection.emplace(0, random_tensor({d}, rng));
  start.entity_projection.emplace(4, random_tensor({d}, rng));

  // ½‖mr − c‖² + ½‖r_p‖² + Σ ⟨p_e, p_e⟩ : gradient is known in closed form.
  const Tensor c = random_tensor({d}, rng);
  const AdaptLossFn quadratic = [&](Tape& tape, const AdaptVars& v) {
    const Var diff = ops::sub(v.meta, tape.constant(c));
    std::vector<Var> terms{ops::scale(ops::dot(diff, diff), 0.5),
                           ops::scale(ops::dot(v.relation_projection, v.relation_projection), 0.5)};
    for (const auto& [e, p] : v.entity_projection) terms.push_back(ops::dot(p, p));
    return ops::add_n(terms);
  };

  SUBCASE("closed-form step, zero rate and zero gradient") {
    Tape tape;
    const AdaptVars vars = as_leaves(tape, start);
    const Var loss = quadratic(tape, vars);
    const auto stepped = values_of(inner_update(loss, vars, 0.1));
    for (std::size_t i = 0; i < d; ++i) {
      CHECK(stepped.meta[i] == doctest::Approx(start.meta[i] - 0.1 * (start.meta[i] - c[i])).epsilon(1e-14));
      CHECK(stepped.entity_projection.at(4)[i] ==
            doctest::Approx(start.entity_projection.at(4)[i] * 0.8).epsilon(1e-14));
    }
    CHECK(values_of(inner_update(loss, vars, 0.0)) == start);
    const Var flat = tape.constant(Tensor::scalar(2.0));
    CHECK(values_of(inner_update(flat, vars, 0.5)) == start);
  }
  SUBCASE("small steps decrease the loss") {
    const auto result = backtracking_inner_step(quadratic, start, 0.01);
    CHECK(result.halvings == 0);
    CHECK(result.after < result.before);
    // An absurd rate is cut back until the loss stops increasing.
    const auto cut = backtracking_inner_step(quadratic, start, 100.0);
    CHECK(cut.halvings > 0);
    CHECK(cut.after <= cut.before);
  }
  SUBCASE("query loss with identical supports and zero rate equals the support loss") {
    Tape tape;
    AdaptValues s = start;
    ScoringInputs in;
    for (EntityId e : {0u, 4u}) in.entities.emplace(e, tape.constant(random_tensor({d}, rng)));
    const AdaptVars vars = as_leaves(tape, s);
    in.state = &vars;
    const std::vector<Triple> triples{{0, 0, 4}, {4, 0, 0}};
    const std::vector<EntityId> negs{0, 4};
    const Var support = triple_margin_loss(in, triples, negs, 1.0);
    const AdaptVars adapted = inner_update(support, vars, 0.0);
    const Var query = triple_margin_loss({in.entities, &adapted}, triples, negs, 1.0);
    CHECK(query.value().item() == support.value().item());
  }
}

TEST_CASE("total loss") {
  CHECK(total_loss(1.5, 7.0, 0.0) == 1.5);
  CHECK(total_loss(1.5, 0.0, 0.05) == 1.5);
  CHECK(total_loss(1.0, 2.0, 0.05) == doctest::Approx(1.1).epsilon(1e-15));
  Tape tape;
  const Var q = tape.constant(Tensor::scalar(1.0));
  CHECK(total_loss(q, tape.constant(Tensor::scalar(2.0)), 0.05).value().item() == doctest::Approx(1.1));
  CHECK(total_loss(q, Var{}, 0.05).value().item() == 1.0);
}
