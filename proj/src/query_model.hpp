#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "common.hpp"
#include "json.hpp"
#include "kg_store.hpp"
#include "query_tree.hpp"

namespace qto {

/// Source term of an atom: an anchor entity or a variable.
struct Term {
  bool is_constant = false;
  EntityId entity;
  std::string variable;

  static Term constant(EntityId e) { return {true, e, {}}; }
  static Term var(std::string name) { return {false, EntityId(), std::move(name)}; }
  friend bool operator==(const Term&, const Term&) = default;
};

/// r(from, to) or its negation; `to` is always a variable.
struct Atom {
  RelationId relation;
  bool negated = false;
  Term from;
  std::string to;
  std::size_t conjunct_index = 0;

  friend bool operator==(const Atom&, const Atom&) = default;
};

/// Disjunctive normal form: OR over disjuncts, each an AND of atoms.
struct DnfQuery {
  std::string answer;
  std::vector<std::vector<Atom>> disjuncts;

  std::set<std::string> variables() const;
  bool has_negation() const;
  /// Reindexes conjunct_index to match positions and checks basic shape.
  void normalize();

  friend bool operator==(const DnfQuery&, const DnfQuery&) = default;
};

/// Parses the query wire format, resolving labels against the graph.
/// Throws Error(kParse) on schema violations or unknown labels.
DnfQuery parse_query(const std::string& text, const KnowledgeGraph& kg);
DnfQuery query_from_json(const nlohmann::json& j, const KnowledgeGraph& kg);
nlohmann::json query_to_json(const DnfQuery& q, const KnowledgeGraph& kg);
std::string serialize_query(const DnfQuery& q, const KnowledgeGraph& kg);

/// Converts a DNF query into its computation tree: dependency multigraph
/// oriented toward the answer variable (relations inverted where needed),
/// merging of same-relation parallel edges from different disjuncts into
/// union structure, then variable separation into intersection/union copies.
/// Throws Error(kUnsupportedQuery) for cyclic or disconnected dependency
/// graphs and for disjunct layouts that cannot be factored into a tree.
QueryTree to_computation_tree(const DnfQuery& q);

/// Nested tree wire format used in generated query files.
nlohmann::json tree_to_json(const QueryTree& tree, const KnowledgeGraph& kg);
QueryTree tree_from_json(const nlohmann::json& j, const KnowledgeGraph& kg);

/// Human-readable rendering of a relational tree edge, e.g. "r(e1,v1)" or
/// "!r(v1,v?)", using the entities assigned to each node.
std::string describe_edge(const QueryTree& tree, NodeId node, const std::vector<EntityId>& assignment,
                          const KnowledgeGraph& kg);

}  // namespace qto
