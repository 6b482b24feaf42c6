#include "pmkg/kg/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "pmkg/error.hpp"
#include "pmkg/log.hpp"

namespace pmkg {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct NamedTriple {
  std::string head;
  std::string relation;
  std::string tail;
};

struct NamedTask {
  std::string relation;
  std::vector<NamedTriple> triples;
};

struct NamedCandidates {
  std::string head;
  std::string relation;
  std::vector<std::string> truths;
  std::vector<std::string> candidates;
};

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail_data("unreadable-file", path.string());
  return in;
}

std::vector<NamedTriple> read_triple_names(const fs::path& path) {
  auto in = open_input(path);
  std::vector<NamedTriple> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto first = line.find('\t');
    const auto second = first == std::string::npos ? first : line.find('\t', first + 1);
    if (second == std::string::npos || line.find('\t', second + 1) != std::string::npos) {
      fail_data("malformed-triple", path.string() + ":" + std::to_string(number) +
                                        " expected head<TAB>relation<TAB>tail");
    }
    NamedTriple t{line.substr(0, first), line.substr(first + 1, second - first - 1),
                  line.substr(second + 1)};
    if (t.head.empty() || t.relation.empty() || t.tail.empty()) {
      fail_data("malformed-triple", path.string() + ":" + std::to_string(number) + " empty field");
    }
    out.push_back(std::move(t));
  }
  return out;
}

json read_json(const fs::path& path) {
  auto in = open_input(path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail_data("malformed-json", path.string() + ": " + e.what());
  }
}

std::vector<NamedTask> read_task_names(const fs::path& path) {
  const json doc = read_json(path);
  if (!doc.is_object()) fail_data("malformed-tasks", path.string() + ": expected an object");
  std::vector<NamedTask> out;
  for (const auto& [relation, rows] : doc.items()) {
    if (!rows.is_array()) fail_data("malformed-tasks", relation + ": expected a list of triples");
    NamedTask task{relation, {}};
    for (const auto& row : rows) {
      if (!row.is_array() || row.size() != 3 || !row[0].is_string() || !row[1].is_string() ||
          !row[2].is_string()) {
        fail_data("malformed-tasks", relation + ": triples must be [head, relation, tail]");
      }
      NamedTriple t{row[0].get<std::string>(), row[1].get<std::string>(), row[2].get<std::string>()};
      if (t.relation != relation) {
        fail_data("malformed-tasks", "triple relation '" + t.relation + "' listed under '" + relation + "'");
      }
      task.triples.push_back(std::move(t));
    }
    out.push_back(std::move(task));
  }
  return out;
}

std::vector<NamedCandidates> read_candidate_names(const fs::path& path) {
  const json doc = read_json(path);
  if (!doc.is_object()) fail_data("malformed-candidates", path.string() + ": expected an object");
  std::vector<NamedCandidates> out;
  for (const auto& [key, entry] : doc.items()) {
    const auto tab = key.find('\t');
    if (tab == std::string::npos) fail_data("malformed-candidates", "key '" + key + "' lacks a tab");
    if (!entry.is_object() || !entry.contains("true") || !entry.contains("candidates")) {
      fail_data("malformed-candidates", "entry '" + key + "' needs 'true' and 'candidates'");
    }
    NamedCandidates c{key.substr(0, tab), key.substr(tab + 1), {}, {}};
    try {
      c.truths = entry.at("true").get<std::vector<std::string>>();
      c.candidates = entry.at("candidates").get<std::vector<std::string>>();
    } catch (const json::exception&) {
      fail_data("malformed-candidates", "entry '" + key + "' must hold string lists");
    }
    out.push_back(std::move(c));
  }
  return out;
}

// Resolves names to ids, interning only while the vocabulary is open.
class Resolver {
 public:
  Resolver(Vocabulary& entities, Vocabulary& relations, bool frozen_entities, bool frozen_relations)
      : entities_(entities),
        relations_(relations),
        frozen_entities_(frozen_entities),
        frozen_relations_(frozen_relations) {}

  EntityId entity(const std::string& name) {
    if (!frozen_entities_) return entities_.intern(name);
    if (const auto* id = entities_.find(name)) return *id;
    fail_data("unknown-entity", name);
  }

  RelationId relation(const std::string& name) {
    if (!frozen_relations_) return relations_.intern(name);
    if (const auto* id = relations_.find(name)) return *id;
    fail_data("unknown-relation", name);
  }

  Triple triple(const NamedTriple& t) {
    const EntityId h = entity(t.head);
    const RelationId r = relation(t.relation);
    return Triple{h, r, entity(t.tail)};
  }

 private:
  Vocabulary& entities_;
  Vocabulary& relations_;
  bool frozen_entities_;
  bool frozen_relations_;
};

std::vector<RelationTask> resolve_tasks(const std::vector<NamedTask>& named, Resolver& resolver) {
  std::vector<RelationTask> out;
  for (const auto& task : named) {
    RelationTask resolved{resolver.relation(task.relation), {}};
    for (const auto& t : task.triples) resolved.triples.push_back(resolver.triple(t));
    out.push_back(std::move(resolved));
  }
  return out;
}

CandidateMap resolve_candidates(const std::vector<NamedCandidates>& named, Resolver& resolver) {
  CandidateMap out;
  for (const auto& c : named) {
    const EntityId head = resolver.entity(c.head);
    const RelationId relation = resolver.relation(c.relation);
    CandidateEntry entry;
    for (const auto& n : c.truths) entry.true_tails.push_back(resolver.entity(n));
    for (const auto& n : c.candidates) entry.candidates.push_back(resolver.entity(n));
    out[{head, relation}] = std::move(entry);
  }
  return out;
}

void warn_duplicates(const Kg& kg, const fs::path& path) {
  if (kg.duplicates_dropped() > 0) {
    log_warn(path.string() + ": dropped " + std::to_string(kg.duplicates_dropped()) +
             " duplicate triple(s)");
  }
}

}  // namespace

Kg load_triples(const fs::path& path) {
  Vocabulary entities;
  Vocabulary relations;
  Resolver resolver(entities, relations, false, false);
  std::vector<Triple> triples;
  for (const auto& t : read_triple_names(path)) triples.push_back(resolver.triple(t));
  Kg kg(std::move(entities), std::move(relations), triples);
  warn_duplicates(kg, path);
  return kg;
}

std::vector<RelationTask> load_tasks(const fs::path& path, const Kg& kg) {
  Vocabulary entities = kg.entities();
  Vocabulary relations = kg.relations();
  Resolver resolver(entities, relations, true, true);
  return resolve_tasks(read_task_names(path), resolver);
}

CandidateMap load_candidates(const fs::path& path, const Kg& kg) {
  Vocabulary entities = kg.entities();
  Vocabulary relations = kg.relations();
  Resolver resolver(entities, relations, true, true);
  return resolve_candidates(read_candidate_names(path), resolver);
}

FewShotTask make_few_shot_task(const RelationTask& task, std::size_t k, const CandidateMap& candidates) {
  if (k < 1) fail_usage("bad-shot", "K must be at least 1");
  if (task.triples.size() < k + 1) {
    fail_usage("too-few-triples", "relation " + std::to_string(task.relation) + " has " +
                                      std::to_string(task.triples.size()) +
                                      " triples; K=" + std::to_string(k) + " leaves no query");
  }
  FewShotTask out;
  out.relation = task.relation;
  out.support.assign(task.triples.begin(), task.triples.begin() + static_cast<std::ptrdiff_t>(k));
  for (std::size_t i = k; i < task.triples.size(); ++i) {
    const Triple& t = task.triples[i];
    const auto it = candidates.find({t.head, t.relation});
    if (it == candidates.end()) {
      fail_data("missing-candidates", "no candidate list for head " + std::to_string(t.head) +
                                          " of relation " + std::to_string(t.relation));
    }
    const auto& entry = it->second;
    if (std::find(entry.candidates.begin(), entry.candidates.end(), t.tail) == entry.candidates.end()) {
      fail_data("true-tail-missing", "true tail " + std::to_string(t.tail) +
                                         " absent from its candidate list");
    }
    Query q{t.head, t.tail, {}};
    for (EntityId c : entry.candidates) {
      const bool other_truth = c != t.tail && std::find(entry.true_tails.begin(),
                                                        entry.true_tails.end(), c) != entry.true_tails.end();
      if (!other_truth) q.candidates.push_back(c);
    }
    out.queries.push_back(std::move(q));
  }
  return out;
}

std::vector<std::string> read_embedding_names(const fs::path& path) {
  auto in = open_input(path);
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string name;
    if (fields >> name) names.push_back(name);
  }
  return names;
}

EmbeddingTable load_embeddings(const fs::path& path, const Vocabulary& vocab, EmbeddingKind kind) {
  auto in = open_input(path);
  std::vector<std::vector<double>> rows(vocab.size());
  std::vector<bool> seen(vocab.size(), false);
  std::size_t dim = 0;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::istringstream fields(line);
    std::string name;
    if (!(fields >> name)) continue;
    std::vector<double> values;
    std::string token;
    while (fields >> token) {
      char* end = nullptr;
      const double v = std::strtod(token.c_str(), &end);
      if (end == token.c_str() || *end != '\0') {
        fail_data("malformed-embedding", path.string() + ":" + std::to_string(number) + " bad value '" + token + "'");
      }
      values.push_back(v);
    }
    if (values.empty() || (dim != 0 && values.size() != dim)) {
      fail_data("malformed-embedding", path.string() + ":" + std::to_string(number) + " inconsistent dimension");
    }
    dim = values.size();
    const auto* id = vocab.find(name);
    if (id == nullptr) continue;
    rows[*id] = std::move(values);
    seen[*id] = true;
  }
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    if (!seen[i]) fail_data("missing-embedding", path.string() + " lacks a row for '" + vocab.name(i) + "'");
  }
  EmbeddingTable table{kind, {}};
  if (vocab.size() == 0) return table;
  std::vector<double> flat;
  flat.reserve(vocab.size() * dim);
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  table.table = Tensor::matrix(vocab.size(), dim, std::move(flat));
  return table;
}

void write_embeddings(const fs::path& path, const Vocabulary& vocab, const EmbeddingTable& table) {
  std::ofstream out(path);
  if (!out) fail_data("unwritable-file", path.string());
  char buffer[32];
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    out << vocab.name(i);
    for (double v : table.table.row(i)) {
      std::snprintf(buffer, sizeof buffer, "%.17g", v);
      out << ' ' << buffer;
    }
    out << '\n';
  }
  if (!out) fail_data("unwritable-file", path.string());
}

void check_disjoint_splits(const std::vector<RelationTask>& train, const std::vector<RelationTask>& valid,
                           const std::vector<RelationTask>& test, const Kg& kg) {
  std::map<RelationId, int> owner;
  const std::vector<const std::vector<RelationTask>*> splits{&train, &valid, &test};
  for (int s = 0; s < 3; ++s) {
    for (const auto& task : *splits[s]) {
      auto [it, inserted] = owner.emplace(task.relation, s);
      if (!inserted && it->second != s) {
        fail_data("overlapping-splits", "relation '" + kg.relations().name(task.relation) +
                                            "' appears in more than one split");
      }
    }
  }
}

Kg assemble_graph(Vocabulary entities, Vocabulary relations, std::vector<Triple> background,
                  const Dataset& splits, const DatasetOptions& options, const std::string& origin) {
  std::unordered_set<RelationId> few_shot;
  for (const auto* split : {&splits.train, &splits.valid, &splits.test}) {
    for (const auto& task : *split) few_shot.insert(task.relation);
  }
  for (const auto& t : background) {
    if (few_shot.contains(t.relation)) {
      fail_data("task-relation-in-background",
                "relation '" + relations.name(t.relation) + "' is both few-shot and background");
    }
  }
  std::vector<Triple> all = std::move(background);
  for (const auto* split : {&splits.train, &splits.valid, &splits.test}) {
    for (const auto& task : *split) all.insert(all.end(), task.triples.begin(), task.triples.end());
  }
  Kg kg(std::move(entities), std::move(relations), all);
  warn_duplicates(kg, origin);
  std::mt19937_64 rng(options.seed);
  Kg indexed = build_neighbor_index(std::move(kg), options.neighbor_cap, rng, few_shot);
  check_disjoint_splits(splits.train, splits.valid, splits.test, indexed);
  return indexed;
}

Dataset load_dataset(const fs::path& dir, const DatasetOptions& options) {
  const auto path = [&](const char* name) { return dir / name; };
  Vocabulary entities;
  Vocabulary relations;
  const bool frozen_entities = fs::exists(path(dataset_files::entity_relational));
  const bool frozen_relations = fs::exists(path(dataset_files::relation_relational));
  if (frozen_entities) {
    for (const auto& n : read_embedding_names(path(dataset_files::entity_relational))) entities.intern(n);
  }
  if (frozen_relations) {
    for (const auto& n : read_embedding_names(path(dataset_files::relation_relational))) relations.intern(n);
  }
  Resolver resolver(entities, relations, frozen_entities, frozen_relations);

  std::vector<Triple> all;
  for (const auto& t : read_triple_names(path(dataset_files::triples))) all.push_back(resolver.triple(t));

  Dataset ds;
  const auto read_split = [&](const char* name) {
    const auto p = path(name);
    if (!fs::exists(p)) return std::vector<RelationTask>{};
    return resolve_tasks(read_task_names(p), resolver);
  };
  ds.train = read_split(dataset_files::train_tasks);
  ds.valid = read_split(dataset_files::valid_tasks);
  ds.test = read_split(dataset_files::test_tasks);
  if (fs::exists(path(dataset_files::candidates))) {
    ds.candidates = resolve_candidates(read_candidate_names(path(dataset_files::candidates)), resolver);
  }

  ds.kg = assemble_graph(std::move(entities), std::move(relations), std::move(all), ds, options, dir.string());
  if (frozen_entities) {
    ds.entity_relational = load_embeddings(path(dataset_files::entity_relational), ds.kg.entities(),
                                           EmbeddingKind::relational_entity);
  }
  if (frozen_relations) {
    ds.relation_relational = load_embeddings(path(dataset_files::relation_relational),
                                             ds.kg.relations(), EmbeddingKind::relational_relation);
  }
  if (fs::exists(path(dataset_files::entity_semantic))) {
    ds.entity_semantic = load_embeddings(path(dataset_files::entity_semantic), ds.kg.entities(),
                                         EmbeddingKind::semantic_entity);
  }
  return ds;
}

}  // namespace pmkg
