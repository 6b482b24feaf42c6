#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pmkg/kg/dataset.hpp"
#include "pmkg/model/episode.hpp"
#include "pmkg/train/checkpoint.hpp"
#include "pmkg/train/config.hpp"
#include "pmkg/train/metrics.hpp"

namespace pmkg {

struct LogRow {
  std::size_t step = 0;
  double loss_q = 0.0;
  double loss_pt = 0.0;
  Metrics valid;
};

struct TrainOptions {
  // Worker threads for the episodes of one batch; results do not depend on it.
  std::size_t threads = 1;
  // When set, the CSV log is written here as training proceeds.
  std::optional<std::filesystem::path> log_path;
};

struct TrainResult {
  Model best;  // parameters with the best validation MRR
  Checkpoint checkpoint;
  std::vector<LogRow> log;
  std::size_t best_step = 0;
  Metrics best_valid;
};

// Seed used for evaluation support negatives, derived from the run seed.
std::uint64_t eval_seed(const TrainConfig& config);

// Aggregated loss and first-order (or second-order) gradient of a batch,
// averaged over episodes. Episodes run on independent tapes; the reduction
// is in episode order.
struct BatchResult {
  double loss_q = 0.0;
  double loss_pt = 0.0;
  ParamStore gradient;
};
BatchResult run_batch(const Model& model, const Kg& kg, const std::vector<Episode>& episodes,
                      std::size_t threads, bool compute_gradient = true);

TrainResult train(const TrainConfig& config, const Dataset& dataset, const TrainOptions& options = {});

std::string log_header();
std::string log_line(const LogRow& row);

// Final report: ablation tag, selected step, validation and test metrics.
std::string report_json(const TrainConfig& config, const TrainResult& result, const EvalReport& test);
std::string metrics_json(const EvalReport& report, const std::string& split);

}  // namespace pmkg
