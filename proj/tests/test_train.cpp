#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

#include "pmkg/error.hpp"
#include "pmkg/kg/synthetic.hpp"
#include "pmkg/train/adam.hpp"
#include "pmkg/train/gradcheck_model.hpp"
#include "pmkg/train/trainer.hpp"
#include "test_support.hpp"

using namespace pmkg;
using pmkg::testing::TempDir;

namespace {

SyntheticSpec small_spec() {
  SyntheticSpec spec;
  spec.types = 3;
  spec.entities_per_type = 10;
  spec.relations = 8;
  spec.triples_per_relation = 6;
  spec.valid_relations = 2;
  spec.test_relations = 2;
  spec.background_relations = 4;
  spec.background_triples_per_relation = 20;
  spec.dim = 8;
  spec.candidates = 20;
  spec.seed = 3;
  spec.held_out_share = 0.0;
  return spec;
}

const Dataset& small_dataset() {
  static const Dataset ds = to_dataset(generate_synthetic_kg(small_spec()));
  return ds;
}

TrainConfig small_config() {
  TrainConfig c;
  c.model.dim = 8;
  c.model.pool_size = 6;
  c.model.pool_negatives = 8;
  c.batch_size = 4;
  c.max_steps = 4;
  c.eval_interval = 2;
  c.shots = 2;
  c.queries = 3;
  return c;
}

Model small_model(ModelConfig config = small_config().resolved_model()) {
  return Model{config, init_params(config, small_dataset(), 11)};
}

Episode small_episode(std::uint64_t seed, std::size_t task = 0) {
  std::mt19937_64 rng(seed);
  return sample_episode(small_dataset().kg, small_dataset().train.at(task), 2, 3, rng);
}

template <class F>
std::string error_code(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

// Sum of hinge terms from independently computed scores.
double hinge_from_scores(const Model& model, const Tensor& enhanced, const AdaptedTask& task,
                         const std::vector<Triple>& positives, const std::vector<EntityId>& negatives) {
  double total = 0.0;
  for (std::size_t i = 0; i < positives.size(); ++i) {
    const double pos = score_candidate(model, enhanced, task, positives[i].head, positives[i].tail);
    const double neg = score_candidate(model, enhanced, task, positives[i].head, negatives[i]);
    total += std::max(0.0, pos + model.config.margin - neg);
  }
  return total;
}

}  // namespace

TEST_CASE("config text") {
  TrainConfig c;
  apply_config_text(c,
                    "# desk run\n"
                    "dim = 16\n"
                    "\n"
                    "ablation = pool-tuning\n"
                    "steps=10\n"
                    "inner_lr = 0.25\n",
                    "inline");
  CHECK(c.model.dim == 16);
  CHECK(c.model.ablation == Ablation::pool_tuning);
  CHECK(c.max_steps == 10);
  CHECK(c.resolved_model().inner_lr == 0.25);

  SUBCASE("round trip") {
    TrainConfig back;
    apply_config_text(back, to_config_text(c), "echo");
    CHECK(to_config_text(back) == to_config_text(c));
    CHECK(back.model.dim == 16);
    CHECK(back.inner_lr == c.inner_lr);
  }
  SUBCASE("inner rate defaults to half the outer rate") {
    TrainConfig d;
    d.learning_rate = 0.004;
    CHECK(d.resolved_model().inner_lr == doctest::Approx(0.002));
    apply_setting(d, "inner_lr", "auto");
    CHECK_FALSE(d.inner_lr.has_value());
  }
  SUBCASE("errors") {
    CHECK(error_code([&] { apply_setting(c, "depth", "3"); }) == "unknown-key");
    CHECK(error_code([&] { apply_setting(c, "dim", "three"); }) == "bad-value");
    CHECK(error_code([&] { apply_setting(c, "ablation", "everything"); }) == "bad-option");
    CHECK(error_code([&] { apply_config_text(c, "dim 3\n", "inline"); }) == "malformed-config");
    TrainConfig bad;
    bad.batch_size = 0;
    CHECK(error_code([&] { bad.validate(); }) != "");
  }
}

TEST_CASE("metrics") {
  SUBCASE("examples") {
    const std::vector<std::size_t> one{1};
    CHECK(compute_metrics(one) == Metrics{1.0, 1.0, 1.0, 1.0, 1});
    const std::vector<std::size_t> two{2};
    const Metrics m2 = compute_metrics(two);
    CHECK(m2.mrr == 0.5);
    CHECK(m2.hits1 == 0.0);
    CHECK(m2.hits5 == 1.0);
    const std::vector<std::size_t> mixed{1, 4, 20};
    const Metrics m = compute_metrics(mixed);
    CHECK(m.mrr == doctest::Approx((1.0 + 0.25 + 0.05) / 3.0).epsilon(1e-15));
    CHECK(m.hits1 == 1.0 / 3.0);
    CHECK(m.hits5 == 2.0 / 3.0);
    CHECK(m.hits10 == 2.0 / 3.0);
  }
  SUBCASE("errors") {
    CHECK(error_code([] { compute_metrics(std::vector<std::size_t>{}); }) == "no-ranks");
    CHECK(error_code([] { compute_metrics(std::vector<std::size_t>{0}); }) != "");
  }
  SUBCASE("orderings hold on random ranks") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<std::size_t> ranks(1 + rng() % 30);
      for (auto& r : ranks) r = 1 + rng() % 40;
      const Metrics m = compute_metrics(ranks);
      CHECK(m.hits1 <= m.hits5);
      CHECK(m.hits5 <= m.hits10);
      CHECK(m.hits10 <= 1.0);
      CHECK(m.mrr >= m.hits1);
      CHECK(m.mrr > 0.0);
      CHECK(m.mrr <= 1.0);
    }
  }
}

TEST_CASE("rank_candidates") {
  SUBCASE("matches a full sort") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<EntityId> candidates(100);
      std::iota(candidates.begin(), candidates.end(), EntityId{0});
      std::shuffle(candidates.begin(), candidates.end(), rng);
      std::vector<double> scores(candidates.size());
      // Coarse values so ties are common.
      for (auto& s : scores) s = static_cast<double>(rng() % 25) / 4.0;
      const EntityId truth = candidates[rng() % candidates.size()];

      std::vector<std::pair<double, EntityId>> sorted;
      for (std::size_t i = 0; i < candidates.size(); ++i) sorted.emplace_back(scores[i], candidates[i]);
      std::sort(sorted.begin(), sorted.end());
      const auto it = std::find_if(sorted.begin(), sorted.end(), [&](const auto& p) { return p.second == truth; });
      const auto expected = static_cast<std::size_t>(it - sorted.begin()) + 1;
      REQUIRE(rank_candidates(scores, candidates, truth) == expected);
    }
  }
  SUBCASE("edge cases") {
    const std::vector<EntityId> single{9};
    const std::vector<double> single_score{3.5};
    CHECK(rank_candidates(single_score, single, 9) == 1);
    const std::vector<EntityId> cands{4, 2, 7};
    const std::vector<double> scores{0.5, 0.9, 0.1};
    CHECK(rank_candidates(scores, cands, 7) == 1);
    CHECK(rank_candidates(scores, cands, 2) == 3);
    CHECK(error_code([&] { rank_candidates(scores, cands, 5); }) == "true-tail-missing");
  }
  SUBCASE("an oracle scorer ranks every true tail first") {
    const Dataset& ds = small_dataset();
    std::vector<std::size_t> ranks;
    for (const auto& task : ds.test) {
      for (const auto& t : task.triples) {
        const auto& entry = ds.candidates.at({t.head, t.relation});
        std::vector<double> scores;
        for (EntityId c : entry.candidates) scores.push_back(c == t.tail ? 0.0 : 1.0);
        ranks.push_back(rank_candidates(scores, entry.candidates, t.tail));
      }
    }
    CHECK(compute_metrics(ranks).mrr == 1.0);
  }
}

TEST_CASE("checkpoint") {
  const Dataset& ds = small_dataset();
  const TrainConfig config = small_config();
  const Model model = small_model();
  Checkpoint ckpt{7, 0.4, to_config_text(config), ds.kg.entity_count(), ds.kg.relation_count(),
                  vocabulary_hash(ds.kg), model.params};
  TempDir dir;

  save_checkpoint(dir / "a.ckpt", ckpt);
  const Checkpoint loaded = load_checkpoint(dir / "a.ckpt");
  CHECK(loaded == ckpt);
  save_checkpoint(dir / "b.ckpt", loaded);
  CHECK(serialize_checkpoint(load_checkpoint(dir / "b.ckpt")) == serialize_checkpoint(ckpt));
  CHECK(serialize_checkpoint(ckpt).rfind("PMKG1", 0) == 0);
  check_vocabulary(loaded, ds.kg);

  SUBCASE("eval after reload equals eval before save") {
    const Model reloaded{config.resolved_model(), loaded.params};
    const auto before = evaluate(model, ds, ds.test, config.shots, 1);
    const auto after = evaluate(reloaded, ds, ds.test, config.shots, 1);
    CHECK(before.overall == after.overall);
  }
  SUBCASE("damaged bytes") {
    const std::string bytes = serialize_checkpoint(ckpt);
    CHECK(error_code([&] { deserialize_checkpoint(bytes.substr(0, bytes.size() / 2)); }) ==
          "truncated-checkpoint");
    CHECK(error_code([&] { deserialize_checkpoint("PMKG9" + bytes.substr(5)); }) == "bad-checkpoint");
  }
  SUBCASE("other vocabulary") {
    SyntheticSpec other = small_spec();
    other.entities_per_type = 11;
    const Dataset ds2 = to_dataset(generate_synthetic_kg(other));
    CHECK(error_code([&] { check_vocabulary(ckpt, ds2.kg); }) == "vocabulary-mismatch");
  }
}

TEST_CASE("episode pipeline") {
  const Dataset& ds = small_dataset();
  const Model model = small_model();
  const Episode ep = small_episode(21);
  const std::vector<std::size_t> prompts{0, 1, 2, 3};
  EpisodeOptions opts;
  opts.batch_prompts = prompts;

  SUBCASE("fixed seed gives identical losses") {
    const auto a = run_episode(model, ds.kg, ep, opts);
    const auto b = run_episode(model, ds.kg, ep, opts);
    CHECK(a.total == b.total);
    CHECK(a.support_loss == b.support_loss);
    CHECK(a.pool_loss == b.pool_loss);
    REQUIRE(a.gradient.size() == b.gradient.size());
    for (std::size_t i = 0; i < a.gradient.size(); ++i) CHECK(a.gradient[i].gradient == b.gradient[i].gradient);
  }
  SUBCASE("semantic ablation never reads the pool") {
    ModelConfig config = model.config;
    config.ablation = Ablation::semantic;
    const Model ablated{config, model.params};
    CHECK_FALSE(retrieval_index(ablated, ep.support).has_value());
    const auto out = run_episode(ablated, ds.kg, ep, opts);
    CHECK_FALSE(out.prompt_index.has_value());
    CHECK(out.pool_loss == 0.0);
    for (const auto& g : out.gradient) CHECK(g.name != param::pool);
  }
  SUBCASE("zero inner rate with support as query gives equal losses") {
    ModelConfig config = model.config;
    config.inner_lr = 0.0;
    const Model frozen{config, model.params};
    Episode same = ep;
    same.queries = ep.support;
    same.query_negatives = ep.support_negatives;
    EpisodeOptions no_drop = opts;
    no_drop.dropout = false;
    const auto out = run_episode(frozen, ds.kg, same, no_drop);
    CHECK(out.query_loss == doctest::Approx(out.support_loss).epsilon(1e-12));
  }
  SUBCASE("evaluation path reproduces the training losses") {
    EpisodeOptions no_drop = opts;
    no_drop.dropout = false;
    const auto out = run_episode(model, ds.kg, ep, no_drop);
    const Tensor enhanced = encode_entities(model, ds.kg);
    const AdaptedTask task = adapt_task(model, enhanced, ep.support, ep.support_negatives);
    CHECK(task.prompt_index == out.prompt_index);
    CHECK(hinge_from_scores(model, enhanced, task, ep.queries, ep.query_negatives) ==
          doctest::Approx(out.query_loss).epsilon(1e-9));

    ModelConfig config = model.config;
    config.inner_lr = 0.0;
    const Model still{config, model.params};
    const AdaptedTask unadapted = adapt_task(still, enhanced, ep.support, ep.support_negatives);
    CHECK(hinge_from_scores(still, enhanced, unadapted, ep.support, ep.support_negatives) ==
          doctest::Approx(out.support_loss).epsilon(1e-9));
  }
  SUBCASE("evaluation leaves parameters untouched and repeats exactly") {
    const auto hash = param_hash(model.params);
    const auto a = evaluate(model, ds, ds.test, 2, 5);
    const auto b = evaluate(model, ds, ds.test, 2, 5);
    CHECK(param_hash(model.params) == hash);
    CHECK(a.overall == b.overall);
    CHECK(a.per_relation == b.per_relation);
    CHECK(a.per_relation.size() == ds.test.size());
  }
}

TEST_CASE("batch reduction does not depend on thread count") {
  const Dataset& ds = small_dataset();
  const Model model = small_model();
  std::vector<Episode> batch;
  for (std::uint64_t s = 0; s < 5; ++s) batch.push_back(small_episode(100 + s, s % ds.train.size()));
  const auto one = run_batch(model, ds.kg, batch, 1);
  const auto three = run_batch(model, ds.kg, batch, 3);
  CHECK(one.loss_q == three.loss_q);
  CHECK(one.loss_pt == three.loss_pt);
  CHECK(one.gradient == three.gradient);
}

TEST_CASE("gradient check on the 10-entity graph") {
  for (bool second_order : {false, true}) {
    CAPTURE(second_order);
    const auto problem = make_gradcheck_problem(4, 1, second_order);
    CHECK(problem.dataset.kg.entity_count() == 10);
    CHECK(problem.dataset.kg.relation_count() == 3);
    const auto groups = gradcheck_model(problem.model, problem.dataset.kg, problem.episode, problem.batch_prompts, 1e-5);
    for (const auto& g : groups) {
      CAPTURE(g.group);
      CAPTURE(g.worst_parameter);
      CHECK(g.checked > 0);
      CHECK(g.max_relative_error <= 1e-4);
    }
    CHECK(gradcheck_passes(groups, 1e-4));
    std::vector<std::string> names;
    for (const auto& g : groups) names.push_back(g.group);
    for (const char* expected : {"embeddings", "neighbor-query", "neighbor-key", "neighbor-score",
                                 "neighbor-transform", "self-attention", "pool", "fuse", "fusion-prompt",
                                 "projection"}) {
      CHECK(std::find(names.begin(), names.end(), expected) != names.end());
    }
  }
}

TEST_CASE("adam") {
  ParamStore params{{"w", Tensor({2}, {1.0, -2.0})}};
  const ParamStore grad{{"w", Tensor({2}, {0.5, -4.0})}};
  Adam adam(0.1);
  adam.step(params, grad);
  // First bias-corrected step is lr·g/(|g| + eps').
  CHECK(params.at("w")[0] == doctest::Approx(1.0 - 0.1).epsilon(1e-7));
  CHECK(params.at("w")[1] == doctest::Approx(-2.0 + 0.1).epsilon(1e-7));

  const double after_first = params.at("w")[0];
  adam.step(params, grad);
  const double m = (0.1 * 0.9 + 0.1) * 0.5;
  const double v = (0.001 * 0.999 + 0.001) * 0.25;
  const double mhat = m / (1 - 0.81);
  const double vhat = v / (1 - 0.999 * 0.999);
  CHECK(params.at("w")[0] == doctest::Approx(after_first - 0.1 * mhat / (std::sqrt(vhat) + 1e-8)).epsilon(1e-12));
  CHECK(adam.steps() == 2);

  ParamStore zero{{"w", Tensor({2}, {1.0, 1.0})}};
  Adam idle(0.1);
  idle.step(zero, ParamStore{{"w", Tensor({2}, {0.0, 0.0})}});
  CHECK(zero.at("w") == Tensor({2}, {1.0, 1.0}));
}

TEST_CASE("train") {
  const Dataset& ds = small_dataset();

  SUBCASE("zero steps keep the initial parameters and log one row") {
    TrainConfig c = small_config();
    c.max_steps = 0;
    const auto r = train(c, ds);
    REQUIRE(r.log.size() == 1);
    CHECK(r.log[0].step == 0);
    CHECK(r.best_step == 0);
    CHECK(r.checkpoint.step == 0);
    CHECK(r.checkpoint.params == r.best.params);
    c.max_steps = 1;
    c.eval_interval = 1;
    CHECK(train(c, ds).log.size() == 2);
  }
  SUBCASE("identical runs are identical, including across thread counts") {
    TempDir dir;
    const TrainConfig c = small_config();
    const auto a = train(c, ds, {1, dir / "a.csv"});
    const auto b = train(c, ds, {2, dir / "b.csv"});
    CHECK(serialize_checkpoint(a.checkpoint) == serialize_checkpoint(b.checkpoint));
    const auto ta = evaluate(a.best, ds, ds.test, c.shots, eval_seed(c));
    const auto tb = evaluate(b.best, ds, ds.test, c.shots, eval_seed(c));
    CHECK(report_json(c, a, ta) == report_json(c, b, tb));
    REQUIRE(a.log.size() == 3);
    CHECK(a.log[1].step == 2);
    CHECK(a.log[2].step == 4);

    std::ifstream la(dir / "a.csv"), lb(dir / "b.csv");
    const std::string sa{std::istreambuf_iterator<char>(la), {}};
    const std::string sb{std::istreambuf_iterator<char>(lb), {}};
    CHECK(sa == sb);
    CHECK(sa.rfind(log_header() + "\n", 0) == 0);
    CHECK(std::count(sa.begin(), sa.end(), '\n') == 4);
  }
  SUBCASE("a partial final interval is still evaluated") {
    TrainConfig c = small_config();
    c.max_steps = 3;
    const auto r = train(c, ds);
    REQUIRE(r.log.size() == 3);
    CHECK(r.log.back().step == 3);
  }
  SUBCASE("the report names the ablation") {
    TrainConfig c = small_config();
    c.max_steps = 1;
    c.model.ablation = Ablation::semantic;
    const auto r = train(c, ds);
    const auto report = report_json(c, r, evaluate(r.best, ds, ds.test, c.shots, 1));
    CHECK(report.find("\"ablation\": \"semantic\"") != std::string::npos);
  }
  SUBCASE("errors") {
    TrainConfig c = small_config();
    c.shots = 6;
    CHECK(error_code([&] { train(c, ds); }) == "shots-too-large");
    Dataset empty = ds;
    empty.train.clear();
    CHECK(error_code([&] { train(small_config(), empty); }) == "no-tasks");
  }
}
