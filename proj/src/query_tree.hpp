#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"

namespace qto {

using NodeId = std::uint32_t;

/// Node kind is the type of the edges joining a node to its children:
/// intersection/union nodes merge copies of the same variable, projection
/// and anti-projection nodes are reached through one relational edge.
enum class NodeKind { kConstant, kIntersection, kUnion, kProjection, kAntiProjection };

const char* to_string(NodeKind kind);

struct TreeNode {
  NodeKind kind = NodeKind::kConstant;
  std::string variable;  // empty for constants
  EntityId entity;       // constants only
  RelationId relation;   // projection / anti-projection only
  std::vector<NodeId> children;
};

/// Rooted query computation tree stored as a flat arena. Node ids are dense
/// and assigned in pre-order, so the root is always node 0 and every child id
/// is larger than its parent's.
class QueryTree {
 public:
  QueryTree() = default;

  /// Takes nodes in any order rooted at `root`; renumbers into pre-order and
  /// validates the structural invariants. Throws Error(kUnsupportedQuery).
  QueryTree(std::vector<TreeNode> nodes, NodeId root);

  static constexpr NodeId root() { return 0; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  const TreeNode& node(NodeId id) const { return nodes_.at(id); }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const std::string& answer_variable() const { return nodes_.front().variable; }

  bool has_negation() const;
  std::size_t num_projections() const;

  /// Children before parents.
  std::vector<NodeId> post_order() const;

  /// For every node, the smallest node id bound to the same entity: the
  /// children of intersection/union nodes are copies of their parent
  /// variable. Constants map to themselves.
  std::vector<NodeId> binding_groups() const;

  /// Ids range-checked against a vocabulary (0 disables the check).
  void check_ids(std::size_t num_entities, std::size_t num_relations) const;

  /// Canonical structure string, e.g. "i(p(c),n(p(c)))". With labels, ids and
  /// relation ids are included: "i(p[r0](e3),n[r1](e5))".
  std::string shape(bool with_ids = false) const;

  friend bool operator==(const QueryTree& a, const QueryTree& b) { return a.shape(true) == b.shape(true); }

 private:
  std::vector<TreeNode> nodes_;
};

/// Incremental construction helper; node ids returned here are builder-local.
class TreeBuilder {
 public:
  NodeId constant(EntityId e);
  NodeId projection(std::string var, RelationId r, NodeId child);
  NodeId anti_projection(std::string var, RelationId r, NodeId child);
  NodeId intersection(std::string var, std::vector<NodeId> children);
  NodeId merge_union(std::string var, std::vector<NodeId> children);
  NodeId add(TreeNode node);

  QueryTree build(NodeId root) &&;

 private:
  std::vector<TreeNode> nodes_;
};

}  // namespace qto
