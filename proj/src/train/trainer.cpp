#include "pmkg/train/trainer.hpp"

#include <atomic>
#include <cstdio>
#include <fstream>
#include <thread>

#include "json.hpp"
#include "pmkg/error.hpp"
#include "pmkg/log.hpp"
#include "pmkg/train/adam.hpp"

namespace pmkg {

namespace {

constexpr std::uint64_t kProbeStream = 0x7072'6f62'65ull;
constexpr std::uint64_t kInitStream = 0x696e'6974ull;
constexpr std::uint64_t kEvalStream = 0x6576'616cull;

std::vector<Episode> sample_batch(const Kg& kg, const std::vector<RelationTask>& tasks, const TrainConfig& config,
                                  std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, tasks.size() - 1);
  std::vector<Episode> batch;
  batch.reserve(config.batch_size);
  for (std::size_t i = 0; i < config.batch_size; ++i) {
    batch.push_back(sample_episode(kg, tasks[pick(rng)], config.shots, config.queries, rng));
  }
  return batch;
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

Checkpoint make_checkpoint(const TrainConfig& config, const Dataset& dataset, const Model& model, std::size_t step,
                           double mrr) {
  return Checkpoint{step,
                    mrr,
                    to_config_text(config),
                    dataset.kg.entity_count(),
                    dataset.kg.relation_count(),
                    vocabulary_hash(dataset.kg),
                    model.params};
}

}  // namespace

std::uint64_t eval_seed(const TrainConfig& config) { return config.seed ^ kEvalStream; }

BatchResult run_batch(const Model& model, const Kg& kg, const std::vector<Episode>& episodes, std::size_t threads,
                      bool compute_gradient) {
  if (episodes.empty()) fail_usage("empty-batch");
  std::vector<std::size_t> prompts;
  for (const auto& ep : episodes) {
    if (const auto idx = retrieval_index(model, ep.support)) prompts.push_back(*idx);
  }
  std::vector<EpisodeOutput> outputs(episodes.size());
  std::vector<std::exception_ptr> errors(episodes.size());
  EpisodeOptions options;
  options.batch_prompts = prompts;
  options.compute_gradient = compute_gradient;
  options.dropout = compute_gradient;

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < episodes.size(); i = next++) {
      try {
        outputs[i] = run_episode(model, kg, episodes[i], options);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(threads, episodes.size()));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  BatchResult result;
  const double scale = 1.0 / static_cast<double>(episodes.size());
  if (compute_gradient) result.gradient = zero_gradient(model.params);
  for (const auto& out : outputs) {
    result.loss_q += out.query_loss * scale;
    result.loss_pt += out.pool_loss * scale;
    if (compute_gradient) accumulate(result.gradient, out.gradient, scale);
  }
  return result;
}

TrainResult train(const TrainConfig& config, const Dataset& dataset, const TrainOptions& options) {
  config.validate();
  if (dataset.train.empty()) fail_data("no-tasks", "the training split is empty");
  if (dataset.valid.empty()) fail_data("no-tasks", "the validation split is empty");
  for (const auto* split : {&dataset.train, &dataset.valid}) {
    for (const auto& t : *split) {
      if (t.triples.size() < config.shots + 1) {
        fail_usage("shots-too-large", "relation '" + dataset.kg.relations().name(t.relation) + "' has " +
                                          std::to_string(t.triples.size()) + " triples, K = " +
                                          std::to_string(config.shots));
      }
    }
  }

  Model model{config.resolved_model(), init_params(config.resolved_model(), dataset, config.seed ^ kInitStream)};
  Adam adam(config.learning_rate);
  std::mt19937_64 rng(config.seed);
  const std::uint64_t valid_seed = eval_seed(config);

  std::ofstream log_file;
  if (options.log_path) {
    log_file.open(*options.log_path);
    if (!log_file) fail_data("unwritable-file", options.log_path->string());
    log_file << log_header() << "\n";
  }

  TrainResult result;
  auto record = [&](std::size_t step, double loss_q, double loss_pt) {
    LogRow row{step, loss_q, loss_pt, evaluate(model, dataset, dataset.valid, config.shots, valid_seed).overall};
    result.log.push_back(row);
    if (log_file.is_open()) log_file << log_line(row) << "\n" << std::flush;
    log_info("step " + std::to_string(step) + " loss_q " + fixed(loss_q) + " valid mrr " + fixed(row.valid.mrr));
    if (step == 0 || row.valid.mrr > result.best_valid.mrr) {
      result.best = model;
      result.best_step = step;
      result.best_valid = row.valid;
    }
  };

  {
    std::mt19937_64 probe_rng(config.seed ^ kProbeStream);
    const auto probe = run_batch(model, dataset.kg, sample_batch(dataset.kg, dataset.train, config, probe_rng),
                                 options.threads, false);
    record(0, probe.loss_q, probe.loss_pt);
  }

  double sum_q = 0.0, sum_pt = 0.0;
  std::size_t since = 0;
  for (std::size_t step = 1; step <= config.max_steps; ++step) {
    const auto batch = run_batch(model, dataset.kg, sample_batch(dataset.kg, dataset.train, config, rng),
                                 options.threads);
    adam.step(model.params, batch.gradient);
    sum_q += batch.loss_q;
    sum_pt += batch.loss_pt;
    ++since;
    if (step % config.eval_interval == 0 || step == config.max_steps) {
      record(step, sum_q / static_cast<double>(since), sum_pt / static_cast<double>(since));
      sum_q = sum_pt = 0.0;
      since = 0;
    }
  }
  result.checkpoint = make_checkpoint(config, dataset, result.best, result.best_step, result.best_valid.mrr);
  return result;
}

std::string log_header() { return "step,loss_q,loss_pt,val_mrr,val_hits1,val_hits5,val_hits10"; }

std::string log_line(const LogRow& row) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g", row.step, row.loss_q, row.loss_pt,
                row.valid.mrr, row.valid.hits1, row.valid.hits5, row.valid.hits10);
  return buf;
}

namespace {

nlohmann::ordered_json metrics_object(const Metrics& m) {
  nlohmann::ordered_json j;
  j["mrr"] = m.mrr;
  j["hits1"] = m.hits1;
  j["hits5"] = m.hits5;
  j["hits10"] = m.hits10;
  j["queries"] = m.count;
  return j;
}

nlohmann::ordered_json report_object(const EvalReport& report) {
  nlohmann::ordered_json j = metrics_object(report.overall);
  nlohmann::ordered_json per = nlohmann::ordered_json::object();
  for (const auto& [name, m] : report.per_relation) per[name] = metrics_object(m);
  j["per_relation"] = per;
  return j;
}

}  // namespace

std::string metrics_json(const EvalReport& report, const std::string& split) {
  nlohmann::ordered_json j;
  j["split"] = split;
  j["metrics"] = report_object(report);
  return j.dump(2) + "\n";
}

std::string report_json(const TrainConfig& config, const TrainResult& result, const EvalReport& test) {
  nlohmann::ordered_json j;
  j["ablation"] = to_string(config.model.ablation);
  j["seed"] = config.seed;
  j["best_step"] = result.best_step;
  j["initial_valid"] = metrics_object(result.log.front().valid);
  j["valid"] = metrics_object(result.best_valid);
  j["test"] = report_object(test);
  return j.dump(2) + "\n";
}

}  // namespace pmkg
