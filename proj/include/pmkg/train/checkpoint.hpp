#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "pmkg/kg/kg.hpp"
#include "pmkg/model/params.hpp"

namespace pmkg {

struct Checkpoint {
  std::uint64_t step = 0;
  double best_valid_mrr = 0.0;
  std::string config_text;
  std::uint64_t entity_count = 0;
  std::uint64_t relation_count = 0;
  std::uint64_t vocabulary_hash = 0;
  ParamStore params;

  bool operator==(const Checkpoint&) const = default;
};

std::uint64_t vocabulary_hash(const Kg& kg);

// Little-endian binary: "PMKG1", step, best MRR, config text, vocabulary
// counts and hash, then length-prefixed named tensors in name order.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Throws "vocabulary-mismatch" when the checkpoint was trained on another graph.
void check_vocabulary(const Checkpoint& ckpt, const Kg& kg);

}  // namespace pmkg
