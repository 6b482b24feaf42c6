#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace pmkg {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  auto operator<=>(const Triple&) const = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const noexcept {
    std::uint64_t h = t.head;
    h = h * 0x9E3779B97F4A7C15ull ^ t.relation;
    h = h * 0x9E3779B97F4A7C15ull ^ t.tail;
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

// Bidirectional name ↔ id table; ids are assigned densely by first insertion.
class Vocabulary {
 public:
  std::uint32_t intern(const std::string& name);
  const std::uint32_t* find(const std::string& name) const;
  const std::string& name(std::uint32_t id) const { return names_.at(id); }
  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }

  bool operator==(const Vocabulary& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> ids_;
};

enum class Direction : std::uint8_t { out, in };

// One element of N_e: the relation and the entity on the other end.
struct Neighbor {
  RelationId relation = 0;
  EntityId entity = 0;
  Direction direction = Direction::out;

  bool operator==(const Neighbor&) const = default;
};

// Immutable triple store. The neighbor index is attached by
// build_neighbor_index and may cover a subset of relations (the background
// graph), while membership queries always see every stored triple.
class Kg {
 public:
  Kg() = default;
  Kg(Vocabulary entities, Vocabulary relations, const std::vector<Triple>& triples);

  const Vocabulary& entities() const noexcept { return entities_; }
  const Vocabulary& relations() const noexcept { return relations_; }
  std::size_t entity_count() const noexcept { return entities_.size(); }
  std::size_t relation_count() const noexcept { return relations_.size(); }

  std::span<const Triple> triples() const noexcept { return triples_; }
  bool contains(const Triple& t) const { return members_.contains(t); }
  bool contains(EntityId h, RelationId r, EntityId t) const { return contains(Triple{h, r, t}); }
  std::size_t duplicates_dropped() const noexcept { return duplicates_; }

  bool has_neighbor_index() const noexcept { return !neighbor_index_.empty() || entities_.size() == 0; }
  std::span<const Neighbor> neighbors(EntityId e) const;

  friend Kg build_neighbor_index(Kg kg, std::size_t cap, std::mt19937_64& rng,
                                 const std::unordered_set<RelationId>& excluded);

 private:
  Vocabulary entities_;
  Vocabulary relations_;
  std::vector<Triple> triples_;
  std::unordered_set<Triple, TripleHash> members_;
  std::size_t duplicates_ = 0;
  std::vector<std::vector<Neighbor>> neighbor_index_;
};

// Attaches N_e for every entity, built from triples whose relation is not in
// `excluded`. Lists longer than `cap` are uniformly subsampled (order kept).
Kg build_neighbor_index(Kg kg, std::size_t cap, std::mt19937_64& rng,
                        const std::unordered_set<RelationId>& excluded = {});

}  // namespace pmkg
