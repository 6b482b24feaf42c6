#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "pmkg/kg/dataset.hpp"
#include "pmkg/model/config.hpp"
#include "pmkg/numerics/mlp.hpp"
#include "pmkg/numerics/tape.hpp"

namespace pmkg {

// Every learnable tensor by name. Ordered so iteration, checkpoints and
// gradient reductions are deterministic.
using ParamStore = std::map<std::string, Tensor>;

namespace param {
inline constexpr const char* entity_relational = "entity.relational";
inline constexpr const char* relation_relational = "relation.relational";
inline constexpr const char* entity_semantic = "entity.semantic";
inline constexpr const char* entity_projection = "entity.projection";
inline constexpr const char* relation_projection = "relation.projection";
inline constexpr const char* neighbor_query = "neighbor.query";
inline constexpr const char* neighbor_key = "neighbor.key";
inline constexpr const char* neighbor_score = "neighbor.score";          // MLP prefix
inline constexpr const char* neighbor_transform = "neighbor.transform";  // MLP prefix
inline constexpr const char* attention_query = "attention.query";
inline constexpr const char* attention_key = "attention.key";
inline constexpr const char* attention_value = "attention.value";
inline constexpr const char* pool = "pool";
inline constexpr const char* fuse = "fuse";                    // MLP prefix
inline constexpr const char* fusion_prompt = "fusion_prompt";  // MLP prefix
inline constexpr const char* fusion_prompt_shared = "fusion_prompt.shared";
}  // namespace param

// Coarse grouping used by gradient-check reports.
std::string param_group(const std::string& name);

const Tensor& get_param(const ParamStore& store, const std::string& name);
Tensor& get_param(ParamStore& store, const std::string& name);

void store_mlp(ParamStore& store, const std::string& prefix, const MlpParams& mlp);
std::size_t mlp_layer_count(const ParamStore& store, const std::string& prefix);

// Fresh parameters for a dataset. Pretrained tables are copied in when the
// dataset carries them; everything else is drawn from `seed`.
ParamStore init_params(const ModelConfig& config, const Dataset& dataset, std::uint64_t seed);
ParamStore init_params(const ModelConfig& config, std::size_t entities, std::size_t relations,
                       std::uint64_t seed);

// Binds parameters onto a tape. Embedding tables are bound per row so only
// rows an episode touches enter the graph; other tensors are bound whole.
// With `trainable` false everything is recorded as a constant.
class ParamBinder {
 public:
  static constexpr std::size_t kWhole = std::numeric_limits<std::size_t>::max();

  struct GradientEntry {
    std::string name;
    std::size_t row = kWhole;
    Tensor gradient;
  };

  ParamBinder(Tape& tape, const ParamStore& store, bool trainable = true);

  Tape& tape() noexcept { return tape_; }
  const ParamStore& store() const noexcept { return store_; }

  Var whole(const std::string& name);
  Var row(const std::string& name, std::size_t index);
  MlpVars mlp(const std::string& prefix, double slope, bool activate_output);

  // Gradient of `loss` for every bound leaf, in binding order.
  std::vector<GradientEntry> gradients(Var loss) const;

 private:
  struct Binding {
    std::string name;
    std::size_t row;
    Var var;
  };
  Var bind(const std::string& name, std::size_t row, Tensor value);

  Tape& tape_;
  const ParamStore& store_;
  bool trainable_;
  std::vector<Binding> bindings_;
  std::unordered_map<std::string, std::uint32_t> lookup_;
};

// Dense gradient with the same names and shapes as a ParamStore.
ParamStore zero_gradient(const ParamStore& store);
void accumulate(ParamStore& dense, const std::vector<ParamBinder::GradientEntry>& entries,
                double scale = 1.0);

// FNV-1a over names, shapes and the exact bits of every value.
std::uint64_t param_hash(const ParamStore& store);

}  // namespace pmkg
