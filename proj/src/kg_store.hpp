#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "common.hpp"
#include "query_tree.hpp"

namespace qto {

enum class Split { kTrain = 0, kValid = 1, kTest = 2 };

/// Label <-> id bijection.
class Vocabulary {
 public:
  std::optional<std::uint32_t> find(const std::string& label) const;
  const std::string& label(std::uint32_t id) const { return labels_.at(id); }
  std::size_t size() const { return labels_.size(); }
  std::uint32_t add(const std::string& label);  // returns existing id if present
  const std::vector<std::string>& labels() const { return labels_; }

  static Vocabulary from_file(const std::string& path);

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

/// Sorted tails per (relation, head), stored CSR-style over the key
/// relation * |V| + head.
class AdjacencyIndex {
 public:
  AdjacencyIndex() = default;
  AdjacencyIndex(std::size_t num_entities, std::size_t num_relations, std::span<const Triple> triples);

  std::span<const EntityId> tails(EntityId head, RelationId r) const;
  bool contains(EntityId head, RelationId r, EntityId tail) const;
  std::size_t num_edges() const { return tails_.size(); }

 private:
  std::size_t num_entities_ = 0;
  std::size_t num_relations_ = 0;
  std::vector<std::uint32_t> offsets_;
  std::vector<EntityId> tails_;
};

/// Immutable knowledge graph with inverse relations materialized.
/// Relation label `r` gets id 2k, its inverse `r/inv` id 2k+1.
class KnowledgeGraph {
 public:
  static constexpr const char* kInverseSuffix = "/inv";

  KnowledgeGraph() = default;

  std::size_t num_entities() const { return entities_.size(); }
  std::size_t num_relations() const { return 2 * base_relations_.size(); }

  const Vocabulary& entities() const { return entities_; }
  const Vocabulary& base_relations() const { return base_relations_; }

  std::string entity_label(EntityId e) const { return entities_.label(e.value); }
  std::string relation_label(RelationId r) const;
  std::optional<EntityId> find_entity(const std::string& label) const;
  /// Accepts forward labels and `label/inv`.
  std::optional<RelationId> find_relation(const std::string& label) const;

  /// Triples of one split, inverses included, sorted and deduplicated.
  std::span<const Triple> split(Split s) const { return splits_[static_cast<int>(s)]; }
  /// Number of forward (non-inverse) edges in a split.
  std::size_t num_forward_edges(Split s) const { return split(s).size() / 2; }

  const AdjacencyIndex& graph(GraphSelector g) const { return graphs_[static_cast<int>(g)]; }

  /// max(1, number of distinct training tails of (head, r)).
  std::size_t tail_count(EntityId head, RelationId r) const;

  /// Entities whose subquery evaluates to 1 on the selected graph's 0/1
  /// adjacency. Returned ascending.
  std::vector<EntityId> traverse_answers(GraphSelector g, const QueryTree& tree) const;

 private:
  friend class KnowledgeGraphLoader;
  Vocabulary entities_;
  Vocabulary base_relations_;
  std::array<std::vector<Triple>, 3> splits_;
  std::array<AdjacencyIndex, 3> graphs_;
};

/// Builds a KnowledgeGraph from per-split triple files. Without vocab files,
/// ids are assigned in first-appearance order across the files in load order.
class KnowledgeGraphLoader {
 public:
  KnowledgeGraphLoader() = default;
  KnowledgeGraphLoader(std::optional<std::string> entity_vocab, std::optional<std::string> relation_vocab);

  /// Throws Error(kIo) if the file is unreadable and Error(kParse) with the
  /// line number for malformed lines or labels missing from a fixed vocab.
  void load_file(const std::string& path, Split split);
  void add_triple(const std::string& head, const std::string& relation, const std::string& tail, Split split);
  /// Id-level insertion for synthetic graphs (vocab grown with numeric labels).
  void add_triple(std::uint32_t head, std::uint32_t base_relation, std::uint32_t tail, Split split);
  void reserve_entities(std::size_t n);
  void reserve_relations(std::size_t n);

  KnowledgeGraph build() &&;

 private:
  void add_forward(std::uint32_t h, std::uint32_t base_r, std::uint32_t t, Split split);

  Vocabulary entities_;
  Vocabulary relations_;
  bool fixed_entities_ = false;
  bool fixed_relations_ = false;
  std::array<std::vector<Triple>, 3> splits_;
};

struct DatasetPaths {
  std::string train;
  std::optional<std::string> valid;
  std::optional<std::string> test;
  std::optional<std::string> entity_vocab;
  std::optional<std::string> relation_vocab;
};

KnowledgeGraph load_knowledge_graph(const DatasetPaths& paths);

}  // namespace qto
