#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "pmkg/kg/kg.hpp"
#include "pmkg/numerics/tensor.hpp"

namespace pmkg {

// All triples of one few-shot relation, in file order.
struct RelationTask {
  RelationId relation = 0;
  std::vector<Triple> triples;

  bool operator==(const RelationTask&) const = default;
};

struct CandidateEntry {
  std::vector<EntityId> true_tails;
  std::vector<EntityId> candidates;

  bool operator==(const CandidateEntry&) const = default;
};

using CandidateKey = std::pair<EntityId, RelationId>;
using CandidateMap = std::map<CandidateKey, CandidateEntry>;

struct Query {
  EntityId head = 0;
  EntityId tail = 0;
  // Candidate tails with the other true tails of (head, relation) removed.
  std::vector<EntityId> candidates;
};

struct FewShotTask {
  RelationId relation = 0;
  std::vector<Triple> support;
  std::vector<Query> queries;
};

enum class EmbeddingKind { relational_entity, relational_relation, semantic_entity };

struct EmbeddingTable {
  EmbeddingKind kind = EmbeddingKind::relational_entity;
  Tensor table;  // rows × dim, row i belongs to vocabulary id i

  std::size_t dim() const noexcept { return table.cols(); }
  std::size_t rows() const noexcept { return table.rows(); }
};

// head<TAB>relation<TAB>tail per line; ids interned by first appearance.
Kg load_triples(const std::filesystem::path& path);

// JSON object: relation name → [[head, relation, tail], ...]. Names must
// resolve in the graph's vocabulary.
std::vector<RelationTask> load_tasks(const std::filesystem::path& path, const Kg& kg);

// JSON object: "head<TAB>relation" → {"true": [...], "candidates": [...]}.
CandidateMap load_candidates(const std::filesystem::path& path, const Kg& kg);

// Support = first k triples, queries = the rest with their candidate lists.
FewShotTask make_few_shot_task(const RelationTask& task, std::size_t k, const CandidateMap& candidates);

// Text format: `name v1 v2 ... vd` per line. Every vocabulary entry needs a row.
EmbeddingTable load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                               EmbeddingKind kind);
void write_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                      const EmbeddingTable& table);
std::vector<std::string> read_embedding_names(const std::filesystem::path& path);

struct Dataset {
  Kg kg;
  std::vector<RelationTask> train;
  std::vector<RelationTask> valid;
  std::vector<RelationTask> test;
  CandidateMap candidates;
  std::optional<EmbeddingTable> entity_relational;
  std::optional<EmbeddingTable> relation_relational;
  std::optional<EmbeddingTable> entity_semantic;
};

struct DatasetOptions {
  std::size_t neighbor_cap = 50;
  std::uint64_t seed = 0;
};

// File names inside a dataset directory.
namespace dataset_files {
inline constexpr const char* triples = "triples.tsv";
inline constexpr const char* train_tasks = "train_tasks.json";
inline constexpr const char* valid_tasks = "valid_tasks.json";
inline constexpr const char* test_tasks = "test_tasks.json";
inline constexpr const char* candidates = "candidates.json";
inline constexpr const char* entity_relational = "entity_rel.txt";
inline constexpr const char* relation_relational = "relation_rel.txt";
inline constexpr const char* entity_semantic = "entity_sem.txt";
}  // namespace dataset_files

// Loads a dataset directory. When entity_rel.txt is present its row order
// fixes the entity vocabulary (likewise relation_rel.txt); otherwise names are
// interned from triples, then train/valid/test tasks, then candidates. The
// neighbor index covers the background graph only (few-shot relations
// excluded) while membership sees every triple.
Dataset load_dataset(const std::filesystem::path& dir, const DatasetOptions& options = {});

// Background triples plus every task triple of `splits`, indexed over the
// background only. Shared by file loading and in-memory datasets.
Kg assemble_graph(Vocabulary entities, Vocabulary relations, std::vector<Triple> background,
                  const Dataset& splits, const DatasetOptions& options, const std::string& origin);

// Throws when any relation appears in more than one split.
void check_disjoint_splits(const std::vector<RelationTask>& train,
                           const std::vector<RelationTask>& valid,
                           const std::vector<RelationTask>& test, const Kg& kg);

}  // namespace pmkg
