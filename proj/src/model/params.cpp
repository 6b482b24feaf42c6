#include "pmkg/model/params.hpp"

#include <bit>
#include <cmath>

#include "pmkg/error.hpp"
#include "pmkg/log.hpp"

namespace pmkg {

std::string param_group(const std::string& name) {
  auto starts = [&](const char* prefix) { return name.rfind(prefix, 0) == 0; };
  if (name == param::entity_relational || name == param::relation_relational ||
      name == param::entity_semantic) {
    return "embeddings";
  }
  if (name == param::entity_projection || name == param::relation_projection) return "projection";
  if (name == param::neighbor_query) return "neighbor-query";
  if (name == param::neighbor_key) return "neighbor-key";
  if (starts(param::neighbor_score)) return "neighbor-score";
  if (starts(param::neighbor_transform)) return "neighbor-transform";
  if (starts("attention.")) return "self-attention";
  if (name == param::pool) return "pool";
  if (starts(param::fusion_prompt)) return "fusion-prompt";
  if (starts(param::fuse)) return "fuse";
  return name;
}

const Tensor& get_param(const ParamStore& store, const std::string& name) {
  const auto it = store.find(name);
  if (it == store.end()) fail_data("missing-parameter", name);
  return it->second;
}

Tensor& get_param(ParamStore& store, const std::string& name) {
  const auto it = store.find(name);
  if (it == store.end()) fail_data("missing-parameter", name);
  return it->second;
}

void store_mlp(ParamStore& store, const std::string& prefix, const MlpParams& mlp) {
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    const std::string base = prefix + "." + std::to_string(i);
    store[base + ".weight"] = mlp.layers[i].weight;
    store[base + ".bias"] = mlp.layers[i].bias;
  }
}

std::size_t mlp_layer_count(const ParamStore& store, const std::string& prefix) {
  std::size_t n = 0;
  while (store.contains(prefix + "." + std::to_string(n) + ".weight")) ++n;
  return n;
}

namespace {

Tensor gaussian(Tensor::Shape shape, double stddev, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> normal(0.0, stddev);
  for (auto& v : t.values()) v = normal(rng);
  return t;
}

Tensor xavier(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> uniform(-limit, limit);
  Tensor t({in, out});
  for (auto& v : t.values()) v = uniform(rng);
  return t;
}

void copy_table(ParamStore& store, const char* name, const std::optional<EmbeddingTable>& table,
                std::size_t rows, std::size_t dim) {
  if (!table) return;
  if (table->rows() != rows || table->dim() != dim) {
    fail_data("dim-mismatch", std::string(name) + " table is " + shape_string(table->table.shape()) +
                                  ", model expects [" + std::to_string(rows) + "," +
                                  std::to_string(dim) + "]");
  }
  store[name] = table->table;
}

}  // namespace

ParamStore init_params(const ModelConfig& config, std::size_t entities, std::size_t relations,
                       std::uint64_t seed) {
  config.validate();
  if (entities == 0 || relations == 0) fail_data("empty-vocabulary", "no entities or relations");
  std::mt19937_64 rng(seed);
  const std::size_t d = config.dim;
  const std::size_t dk = config.effective_key_dim();
  const std::size_t pair = config.pair_dim();
  const double table_scale = 1.0 / std::sqrt(static_cast<double>(d));

  ParamStore store;
  store[param::entity_relational] = gaussian({entities, d}, table_scale, rng);
  store[param::relation_relational] = gaussian({relations, d}, table_scale, rng);
  store[param::entity_semantic] = gaussian({entities, d}, table_scale, rng);
  // Small but non-zero: a zero projection vector would receive no gradient
  // through ⟨e_p, e⟩·r_p and stay zero forever.
  store[param::entity_projection] = gaussian({entities, d}, 0.1 * table_scale, rng);
  store[param::relation_projection] = gaussian({d}, 0.1 * table_scale, rng);

  store[param::neighbor_query] = xavier(d, dk, rng);
  store[param::neighbor_key] = xavier(2 * d, dk, rng);
  if (config.attention_score == AttentionScore::concat) {
    store_mlp(store, param::neighbor_score, make_mlp({2 * dk, 1}, config.slope, true, rng));
  }
  store_mlp(store, param::neighbor_transform, make_mlp({2 * d, d, d}, config.slope, false, rng));

  store[param::attention_query] = xavier(pair, pair, rng);
  store[param::attention_key] = xavier(pair, pair, rng);
  store[param::attention_value] = xavier(pair, pair, rng);

  store[param::pool] = gaussian({config.pool_size, pair}, 1.0 / std::sqrt(static_cast<double>(pair)), rng);

  // Φ_fuse input: task-relational (2d) + prompt (2d) + fusion prompt (d).
  store_mlp(store, param::fuse, make_mlp({pair + pair + d, d, d}, config.slope, false, rng));
  if (config.fusion_prompt == FusionPromptMode::generated) {
    store_mlp(store, param::fusion_prompt, make_mlp({pair + pair, d}, config.slope, true, rng));
  } else {
    store[param::fusion_prompt_shared] = gaussian({d}, table_scale, rng);
  }
  return store;
}

ParamStore init_params(const ModelConfig& config, const Dataset& dataset, std::uint64_t seed) {
  const std::size_t entities = dataset.kg.entity_count();
  const std::size_t relations = dataset.kg.relation_count();
  ParamStore store = init_params(config, entities, relations, seed);
  copy_table(store, param::entity_relational, dataset.entity_relational, entities, config.dim);
  copy_table(store, param::relation_relational, dataset.relation_relational, relations, config.dim);
  copy_table(store, param::entity_semantic, dataset.entity_semantic, entities, config.dim);
  if (!dataset.entity_semantic) {
    log_warn("dataset has no semantic entity embeddings; starting from random ones");
  }
  return store;
}

ParamBinder::ParamBinder(Tape& tape, const ParamStore& store, bool trainable)
    : tape_(tape), store_(store), trainable_(trainable) {}

Var ParamBinder::bind(const std::string& name, std::size_t row, Tensor value) {
  const std::string key = row == kWhole ? name : name + "#" + std::to_string(row);
  if (const auto it = lookup_.find(key); it != lookup_.end()) return bindings_[it->second].var;
  const Var v = trainable_ ? tape_.leaf(std::move(value)) : tape_.constant(std::move(value));
  lookup_.emplace(key, static_cast<std::uint32_t>(bindings_.size()));
  bindings_.push_back(Binding{name, row, v});
  return v;
}

Var ParamBinder::whole(const std::string& name) {
  return bind(name, kWhole, get_param(store_, name));
}

Var ParamBinder::row(const std::string& name, std::size_t index) {
  const Tensor& table = get_param(store_, name);
  if (!table.is_matrix() || index >= table.rows()) {
    fail_numeric("index-out-of-range", name + " row " + std::to_string(index));
  }
  const auto r = table.row(index);
  return bind(name, index, Tensor::vector(std::vector<double>(r.begin(), r.end())));
}

MlpVars ParamBinder::mlp(const std::string& prefix, double slope, bool activate_output) {
  MlpVars vars;
  vars.slope = slope;
  vars.activate_output = activate_output;
  const std::size_t n = mlp_layer_count(store_, prefix);
  if (n == 0) fail_data("missing-parameter", prefix + ".0.weight");
  for (std::size_t i = 0; i < n; ++i) {
    const std::string base = prefix + "." + std::to_string(i);
    vars.layers.emplace_back(whole(base + ".weight"), whole(base + ".bias"));
  }
  return vars;
}

std::vector<ParamBinder::GradientEntry> ParamBinder::gradients(Var loss) const {
  std::vector<Var> wrt;
  wrt.reserve(bindings_.size());
  for (const auto& b : bindings_) wrt.push_back(b.var);
  auto grads = tape_.gradients(loss, wrt);
  std::vector<GradientEntry> out;
  out.reserve(bindings_.size());
  for (std::size_t i = 0; i < bindings_.size(); ++i) {
    out.push_back(GradientEntry{bindings_[i].name, bindings_[i].row, std::move(grads[i])});
  }
  return out;
}

ParamStore zero_gradient(const ParamStore& store) {
  ParamStore out;
  for (const auto& [name, t] : store) out.emplace(name, Tensor::zeros_like(t));
  return out;
}

void accumulate(ParamStore& dense, const std::vector<ParamBinder::GradientEntry>& entries, double scale) {
  for (const auto& e : entries) {
    Tensor& target = get_param(dense, e.name);
    if (e.row == ParamBinder::kWhole) {
      target.axpy(scale, e.gradient);
      continue;
    }
    auto row = target.row(e.row);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += scale * e.gradient[j];
  }
}

std::uint64_t param_hash(const ParamStore& store) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xffu;
      h *= 1099511628211ull;
    }
  };
  for (const auto& [name, t] : store) {
    for (char c : name) mix(static_cast<unsigned char>(c));
    for (auto s : t.shape()) mix(s);
    for (double v : t.values()) mix(std::bit_cast<std::uint64_t>(v));
  }
  return h;
}

}  // namespace pmkg
