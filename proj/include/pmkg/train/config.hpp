#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "pmkg/model/config.hpp"

namespace pmkg {

struct TrainConfig {
  ModelConfig model;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::size_t max_steps = 2000;
  std::size_t eval_interval = 50;
  std::size_t shots = 3;
  std::size_t queries = 5;
  std::size_t neighbor_cap = 50;
  std::uint64_t seed = 1;
  // Unset means half the outer learning rate.
  std::optional<double> inner_lr;

  // Model config with derived values filled in.
  ModelConfig resolved_model() const;
  void validate() const;
};

// Applies one key=value setting; unknown keys and unparsable values are usage errors.
void apply_setting(TrainConfig& config, const std::string& key, const std::string& value);

// `key = value` lines; blank lines and `#` comments ignored.
void apply_config_file(TrainConfig& config, const std::filesystem::path& path);
void apply_config_text(TrainConfig& config, const std::string& text, const std::string& origin);

// Every effective setting in key order, `key = value` per line; parses back
// to the same config.
std::string to_config_text(const TrainConfig& config);

}  // namespace pmkg
