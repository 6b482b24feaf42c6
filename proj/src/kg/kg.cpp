#include "pmkg/kg/kg.hpp"

#include <algorithm>
#include <numeric>

#include "pmkg/error.hpp"

namespace pmkg {

std::uint32_t Vocabulary::intern(const std::string& name) {
  auto [it, inserted] = ids_.try_emplace(name, static_cast<std::uint32_t>(names_.size()));
  if (inserted) names_.push_back(name);
  return it->second;
}

const std::uint32_t* Vocabulary::find(const std::string& name) const {
  auto it = ids_.find(name);
  return it == ids_.end() ? nullptr : &it->second;
}

Kg::Kg(Vocabulary entities, Vocabulary relations, const std::vector<Triple>& triples)
    : entities_(std::move(entities)), relations_(std::move(relations)) {
  triples_.reserve(triples.size());
  for (const Triple& t : triples) {
    if (t.head >= entities_.size() || t.tail >= entities_.size() ||
        t.relation >= relations_.size()) {
      fail_data("unknown-id", "triple references an id outside the vocabulary");
    }
    if (members_.insert(t).second) {
      triples_.push_back(t);
    } else {
      ++duplicates_;
    }
  }
}

std::span<const Neighbor> Kg::neighbors(EntityId e) const {
  if (e >= neighbor_index_.size()) return {};
  return neighbor_index_[e];
}

Kg build_neighbor_index(Kg kg, std::size_t cap, std::mt19937_64& rng,
                        const std::unordered_set<RelationId>& excluded) {
  if (cap < 1) fail_usage("bad-cap", "neighbor cap must be at least 1");
  std::vector<std::vector<Neighbor>> index(kg.entity_count());
  for (const Triple& t : kg.triples_) {
    if (excluded.contains(t.relation)) continue;
    index[t.head].push_back({t.relation, t.tail, Direction::out});
    index[t.tail].push_back({t.relation, t.head, Direction::in});
  }
  for (auto& list : index) {
    // One draw per entity keeps the stream aligned regardless of list sizes.
    std::mt19937_64 local(rng());
    if (list.size() <= cap) continue;
    std::vector<std::size_t> order(list.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), local);
    order.resize(cap);
    std::sort(order.begin(), order.end());
    std::vector<Neighbor> kept;
    kept.reserve(cap);
    for (auto i : order) kept.push_back(list[i]);
    list = std::move(kept);
  }
  kg.neighbor_index_ = std::move(index);
  return kg;
}

}  // namespace pmkg
