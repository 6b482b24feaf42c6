#pragma once

#include <filesystem>
#include <map>
#include <utility>
#include <vector>

#include "pmkg/kg/dataset.hpp"

namespace pmkg {

// Desk-scale KG with planted structure. Entities carry one of `types` latent
// types; few-shot relation j follows type pattern j mod types, mapping a head
// of type a to the type-b entity nearest to head + translation in relational
// space. Semantic embeddings are the type centroid plus Gaussian noise, so the
// type-pair pattern of a relation is visible only through semantics.
struct SyntheticSpec {
  std::size_t types = 6;
  std::size_t entities_per_type = 80;
  std::size_t relations = 40;
  std::size_t triples_per_relation = 40;
  std::size_t valid_relations = 10;
  std::size_t test_relations = 10;
  std::size_t background_relations = 12;
  std::size_t background_triples_per_relation = 100;
  bool background_typed = false;
  std::size_t dim = 32;
  std::size_t candidates = 100;
  double semantic_noise = 0.3;
  double pattern_share = 0.0;
  // Share of each type's entities used only by valid/test relations (heads,
  // tails and candidates); training relations use the rest.
  double held_out_share = 0.5;
  std::uint64_t seed = 7;

  void validate() const;
  std::size_t entity_count() const { return types * entities_per_type; }
  std::size_t held_out_per_type() const;
};

struct TypePattern {
  std::size_t head_type = 0;
  std::size_t tail_type = 0;

  bool operator==(const TypePattern&) const = default;
};

struct SyntheticDataset {
  SyntheticSpec spec;
  Vocabulary entities;
  Vocabulary relations;
  std::vector<std::size_t> entity_types;
  std::map<RelationId, std::size_t> relation_pattern;  // few-shot relations only
  std::vector<TypePattern> patterns;
  std::vector<Triple> background;
  std::vector<RelationTask> train;
  std::vector<RelationTask> valid;
  std::vector<RelationTask> test;
  CandidateMap candidates;
  EmbeddingTable entity_relational;
  EmbeddingTable relation_relational;
  EmbeddingTable entity_semantic;
};

SyntheticDataset generate_synthetic_kg(const SyntheticSpec& spec);

// The dataset load_dataset would read back from write_synthetic's output.
Dataset to_dataset(const SyntheticDataset& data, const DatasetOptions& options = {});

// Writes triples.tsv, {train,valid,test}_tasks.json, candidates.json, the
// three embedding files and spec.json (generator settings plus latent
// entity types and relation patterns).
void write_synthetic(const SyntheticDataset& data, const std::filesystem::path& dir);

// Relation name → pattern index, read back from spec.json.
std::map<std::string, std::size_t> read_relation_patterns(const std::filesystem::path& dir);

}  // namespace pmkg
