#include "pmkg/kg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <set>

#include "json.hpp"
#include "pmkg/error.hpp"

namespace pmkg {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

void SyntheticSpec::validate() const {
  const auto bad = [](const std::string& why) { fail_usage("inconsistent-spec", why); };
  if (types == 0) bad("types must be positive");
  if (entities_per_type == 0) bad("entities per type must be positive");
  if (dim == 0) bad("dim must be positive");
  if (candidates == 0) bad("candidate count must be positive");
  if (triples_per_relation < 2) bad("each few-shot relation needs at least 2 triples");
  if (!(held_out_share >= 0.0 && held_out_share < 1.0)) bad("held-out share must lie in [0, 1)");
  const std::size_t held = held_out_per_type();
  if (held_out_share > 0.0 && (held == 0 || held == entities_per_type)) {
    bad("held-out share leaves one side of the entity split empty");
  }
  const std::size_t smallest = held_out_share > 0.0 ? std::min(held, entities_per_type - held) : entities_per_type;
  if (triples_per_relation > smallest) bad("triples per relation cannot exceed the entities of one type (heads are distinct)");
  if (types == 1 && entities_per_type < 2) bad("a single type needs two entities to avoid self loops");
  if (relations == 0 || valid_relations + test_relations >= relations) {
    bad("need at least one training relation beyond the valid/test splits");
  }
  if (semantic_noise < 0.0) bad("semantic noise must be non-negative");
  if (!(pattern_share >= 0.0 && pattern_share <= 1.0)) bad("pattern share must lie in [0, 1]");
}

std::size_t SyntheticSpec::held_out_per_type() const {
  return static_cast<std::size_t>(std::llround(held_out_share * static_cast<double>(entities_per_type)));
}

namespace {

Tensor gaussian_table(std::size_t rows, std::size_t dim, double sigma, std::mt19937_64& rng) {
  Tensor t({rows, dim});
  std::normal_distribution<double> normal(0.0, sigma);
  for (auto& v : t.values()) v = normal(rng);
  return t;
}

std::string padded(const char* prefix, std::size_t i, int width) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%s%0*zu", prefix, width, i);
  return buffer;
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) fail_data("unwritable-file", path.string());
  out << doc.dump(1) << '\n';
  if (!out) fail_data("unwritable-file", path.string());
}

}  // namespace

SyntheticDataset generate_synthetic_kg(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  SyntheticDataset out;
  out.spec = spec;
  const std::size_t n = spec.entity_count();
  const double sigma = 1.0 / std::sqrt(static_cast<double>(spec.dim));

  for (std::size_t e = 0; e < n; ++e) {
    out.entities.intern(padded("ent", e, 4));
    out.entity_types.push_back(e / spec.entities_per_type);
  }
  for (std::size_t j = 0; j < spec.relations; ++j) out.relations.intern(padded("fs", j, 3));
  for (std::size_t j = 0; j < spec.background_relations; ++j) out.relations.intern(padded("bg", j, 3));

  out.entity_relational = {EmbeddingKind::relational_entity, gaussian_table(n, spec.dim, sigma, rng)};
  out.relation_relational = {EmbeddingKind::relational_relation,
                             gaussian_table(out.relations.size(), spec.dim, sigma, rng)};
  const Tensor centroids = gaussian_table(spec.types, spec.dim, sigma, rng);
  Tensor semantic = gaussian_table(n, spec.dim, sigma * spec.semantic_noise, rng);
  for (std::size_t e = 0; e < n; ++e) {
    for (std::size_t c = 0; c < spec.dim; ++c) semantic.at(e, c) += centroids.at(out.entity_types[e], c);
  }
  out.entity_semantic = {EmbeddingKind::semantic_entity, std::move(semantic)};

  for (std::size_t p = 0; p < spec.types; ++p) out.patterns.push_back({p, (p + 1) % spec.types});
  const Tensor pattern_translation = gaussian_table(spec.types, spec.dim, sigma, rng);
  const double own_share = std::sqrt(1.0 - spec.pattern_share * spec.pattern_share);

  // The last `held` members of each type are reserved for valid/test relations.
  const std::size_t held = spec.held_out_share > 0.0 ? spec.held_out_per_type() : 0;
  const auto is_held_out = [&](EntityId e) { return e % spec.entities_per_type >= spec.entities_per_type - held; };
  enum class Side { any, training, evaluation };
  const auto on_side = [&](EntityId e, Side side) {
    return side == Side::any || held == 0 || is_held_out(e) == (side == Side::evaluation);
  };
  const auto members_of = [&](std::size_t type, Side side) {
    std::vector<EntityId> ids;
    for (std::size_t i = 0; i < spec.entities_per_type; ++i) {
      const auto e = static_cast<EntityId>(type * spec.entities_per_type + i);
      if (on_side(e, side)) ids.push_back(e);
    }
    return ids;
  };

  const Tensor& x = out.entity_relational.table;
  const std::size_t first_valid = spec.relations - spec.valid_relations - spec.test_relations;
  const std::size_t first_test = spec.relations - spec.test_relations;
  std::set<Triple> all_facts;
  for (std::size_t j = 0; j < spec.relations; ++j) {
    const RelationId r = static_cast<RelationId>(j);
    const std::size_t pattern = j % spec.types;
    out.relation_pattern[r] = pattern;
    const Side side = j >= first_valid ? Side::evaluation : Side::training;
    const auto heads_pool = members_of(out.patterns[pattern].head_type, side);
    const auto tails_pool = members_of(out.patterns[pattern].tail_type, side);
    Tensor shift = gaussian_table(1, spec.dim, sigma, rng);
    for (std::size_t c = 0; c < spec.dim; ++c) {
      shift[c] = own_share * shift[c] + spec.pattern_share * pattern_translation.at(pattern, c);
    }

    std::vector<EntityId> heads = heads_pool;
    std::shuffle(heads.begin(), heads.end(), rng);
    heads.resize(spec.triples_per_relation);

    RelationTask task{r, {}};
    for (EntityId h : heads) {
      EntityId best = 0;
      double best_dist = std::numeric_limits<double>::infinity();
      for (EntityId t : tails_pool) {
        if (t == h) continue;
        double d2 = 0.0;
        for (std::size_t c = 0; c < spec.dim; ++c) {
          const double diff = x.at(h, c) + shift[c] - x.at(t, c);
          d2 += diff * diff;
        }
        if (d2 < best_dist) {
          best_dist = d2;
          best = t;
        }
      }
      task.triples.push_back({h, r, best});
      all_facts.insert({h, r, best});
    }
    if (j < first_valid) {
      out.train.push_back(std::move(task));
    } else if (j < first_test) {
      out.valid.push_back(std::move(task));
    } else {
      out.test.push_back(std::move(task));
    }
  }

  std::uniform_int_distribution<std::size_t> pick_type(0, spec.types - 1);
  std::uniform_int_distribution<EntityId> pick_any(0, static_cast<EntityId>(n - 1));
  for (std::size_t j = 0; j < spec.background_relations; ++j) {
    const RelationId r = static_cast<RelationId>(spec.relations + j);
    const std::size_t head_type = pick_type(rng);
    const std::size_t tail_type = pick_type(rng);
    const auto heads_pool = members_of(head_type, Side::any);
    const auto tails_pool = members_of(tail_type, Side::any);
    std::uniform_int_distribution<std::size_t> pick_member(0, spec.entities_per_type - 1);
    std::size_t made = 0;
    for (std::size_t attempt = 0; made < spec.background_triples_per_relation &&
                                  attempt < 20 * spec.background_triples_per_relation;
         ++attempt) {
      const EntityId h = spec.background_typed ? heads_pool[pick_member(rng)] : pick_any(rng);
      const EntityId t = spec.background_typed ? tails_pool[pick_member(rng)] : pick_any(rng);
      if (h == t || !all_facts.insert({h, r, t}).second) continue;
      out.background.push_back({h, r, t});
      ++made;
    }
  }

  for (const auto* split : {&out.train, &out.valid, &out.test}) {
    const Side side = split == &out.train ? Side::training : Side::evaluation;
    for (const auto& task : *split) {
      for (const auto& t : task.triples) {
        CandidateEntry entry;
        entry.true_tails.push_back(t.tail);
        std::vector<EntityId> others;
        for (EntityId e = 0; e < n; ++e) {
          if (e != t.tail && on_side(e, side)) others.push_back(e);
        }
        std::shuffle(others.begin(), others.end(), rng);
        others.resize(std::min(others.size(), spec.candidates - 1));
        entry.candidates = std::move(others);
        entry.candidates.push_back(t.tail);
        std::sort(entry.candidates.begin(), entry.candidates.end());
        out.candidates[{t.head, t.relation}] = std::move(entry);
      }
    }
  }
  return out;
}

Dataset to_dataset(const SyntheticDataset& data, const DatasetOptions& options) {
  Dataset ds;
  ds.train = data.train;
  ds.valid = data.valid;
  ds.test = data.test;
  ds.candidates = data.candidates;
  ds.entity_relational = data.entity_relational;
  ds.relation_relational = data.relation_relational;
  ds.entity_semantic = data.entity_semantic;
  ds.kg = assemble_graph(data.entities, data.relations, data.background, ds, options, "synthetic");
  return ds;
}

void write_synthetic(const SyntheticDataset& data, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) fail_data("unwritable-path", dir.string());
  const auto& ents = data.entities;
  const auto& rels = data.relations;

  {
    std::ofstream out(dir / dataset_files::triples);
    if (!out) fail_data("unwritable-file", (dir / dataset_files::triples).string());
    for (const auto& t : data.background) {
      out << ents.name(t.head) << '\t' << rels.name(t.relation) << '\t' << ents.name(t.tail) << '\n';
    }
  }
  const auto task_json = [&](const std::vector<RelationTask>& tasks) {
    json doc = json::object();
    for (const auto& task : tasks) {
      json rows = json::array();
      for (const auto& t : task.triples) {
        rows.push_back({ents.name(t.head), rels.name(t.relation), ents.name(t.tail)});
      }
      doc[rels.name(task.relation)] = std::move(rows);
    }
    return doc;
  };
  write_json(dir / dataset_files::train_tasks, task_json(data.train));
  write_json(dir / dataset_files::valid_tasks, task_json(data.valid));
  write_json(dir / dataset_files::test_tasks, task_json(data.test));

  json candidates = json::object();
  for (const auto& [key, entry] : data.candidates) {
    json truths = json::array();
    json cands = json::array();
    for (EntityId e : entry.true_tails) truths.push_back(ents.name(e));
    for (EntityId e : entry.candidates) cands.push_back(ents.name(e));
    candidates[ents.name(key.first) + "\t" + rels.name(key.second)] = {{"true", truths}, {"candidates", cands}};
  }
  write_json(dir / dataset_files::candidates, candidates);

  write_embeddings(dir / dataset_files::entity_relational, ents, data.entity_relational);
  write_embeddings(dir / dataset_files::relation_relational, rels, data.relation_relational);
  write_embeddings(dir / dataset_files::entity_semantic, ents, data.entity_semantic);

  const auto& s = data.spec;
  json spec = {{"types", s.types},
               {"entities_per_type", s.entities_per_type},
               {"relations", s.relations},
               {"triples_per_relation", s.triples_per_relation},
               {"valid_relations", s.valid_relations},
               {"test_relations", s.test_relations},
               {"background_relations", s.background_relations},
               {"background_triples_per_relation", s.background_triples_per_relation},
               {"background_typed", s.background_typed},
               {"dim", s.dim},
               {"candidates", s.candidates},
               {"semantic_noise", s.semantic_noise},
               {"pattern_share", s.pattern_share},
               {"held_out_share", s.held_out_share},
               {"seed", s.seed}};
  json patterns = json::object();
  for (const auto& [r, p] : data.relation_pattern) patterns[rels.name(r)] = p;
  json types = json::object();
  for (std::size_t e = 0; e < ents.size(); ++e) types[ents.name(e)] = data.entity_types[e];
  write_json(dir / "spec.json", {{"spec", spec}, {"relation_patterns", patterns}, {"entity_types", types}});
}

std::map<std::string, std::size_t> read_relation_patterns(const fs::path& dir) {
  std::ifstream in(dir / "spec.json");
  if (!in) fail_data("unreadable-file", (dir / "spec.json").string());
  const auto doc = nlohmann::json::parse(in);
  std::map<std::string, std::size_t> out;
  for (const auto& [name, p] : doc.at("relation_patterns").items()) out[name] = p.get<std::size_t>();
  return out;
}

}  // namespace pmkg
