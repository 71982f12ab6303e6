#include "query_tree.hpp"

#include <functional>
#include <numeric>

namespace qto {

const char* to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::kConstant: return "constant";
    case NodeKind::kIntersection: return "intersection";
    case NodeKind::kUnion: return "union";
    case NodeKind::kProjection: return "projection";
    case NodeKind::kAntiProjection: return "anti-projection";
  }
  return "?";
}

const char* to_string(GraphSelector g) {
  switch (g) {
    case GraphSelector::kTrain: return "train";
    case GraphSelector::kTrainValid: return "train+valid";
    case GraphSelector::kFull: return "full";
  }
  return "?";
}

GraphSelector parse_graph_selector(const std::string& s) {
  if (s == "train") return GraphSelector::kTrain;
  if (s == "train+valid" || s == "valid") return GraphSelector::kTrainValid;
  if (s == "full" || s == "test") return GraphSelector::kFull;
  fail(ErrorCode::kInvalidArgument, "unknown graph selector '" + s + "' (expected train|train+valid|full)");
}

QueryTree::QueryTree(std::vector<TreeNode> nodes, NodeId root) {
  if (nodes.empty()) fail(ErrorCode::kUnsupportedQuery, "empty query tree");
  if (root >= nodes.size()) fail(ErrorCode::kUnsupportedQuery, "query tree root out of range");

  // Pre-order renumbering; also detects sharing and cycles (a node reached twice).
  std::vector<NodeId> new_id(nodes.size(), UINT32_MAX);
  std::vector<NodeId> order;
  order.reserve(nodes.size());
  std::function<void(NodeId)> visit = [&](NodeId id) {
    if (id >= nodes.size()) fail(ErrorCode::kUnsupportedQuery, "query tree child id out of range");
    if (new_id[id] != UINT32_MAX) fail(ErrorCode::kUnsupportedQuery, "query graph is not a tree (node reached twice)");
    new_id[id] = static_cast<NodeId>(order.size());
    order.push_back(id);
    for (NodeId c : nodes[id].children) visit(c);
  };
  visit(root);

  nodes_.reserve(order.size());
  for (NodeId old : order) {
    TreeNode n = nodes[old];
    for (auto& c : n.children) c = new_id[c];
    nodes_.push_back(std::move(n));
  }

  for (const auto& n : nodes_) {
    switch (n.kind) {
      case NodeKind::kConstant:
        if (!n.children.empty()) fail(ErrorCode::kUnsupportedQuery, "constant node with children");
        break;
      case NodeKind::kIntersection:
      case NodeKind::kUnion:
        if (n.children.size() < 2)
          fail(ErrorCode::kUnsupportedQuery, std::string(to_string(n.kind)) + " node needs at least two children");
        for (NodeId c : n.children) {
          const auto& child = nodes_[c];
          if (child.kind == NodeKind::kConstant)
            fail(ErrorCode::kUnsupportedQuery, "intersection/union child must be a variable copy");
          if (child.variable != n.variable)
            fail(ErrorCode::kUnsupportedQuery, "intersection/union child '" + child.variable +
                                                   "' is not a copy of '" + n.variable + "'");
        }
        break;
      case NodeKind::kProjection:
      case NodeKind::kAntiProjection:
        if (n.children.size() != 1)
          fail(ErrorCode::kUnsupportedQuery, std::string(to_string(n.kind)) + " node needs exactly one child");
        break;
    }
    if (n.kind != NodeKind::kConstant && n.variable.empty())
      fail(ErrorCode::kUnsupportedQuery, "variable node without a name");
  }
  if (nodes_.front().kind == NodeKind::kConstant)
    fail(ErrorCode::kUnsupportedQuery, "query tree root must be the answer variable");
}

bool QueryTree::has_negation() const {
  for (const auto& n : nodes_)
    if (n.kind == NodeKind::kAntiProjection) return true;
  return false;
}

std::size_t QueryTree::num_projections() const {
  std::size_t k = 0;
  for (const auto& n : nodes_)
    if (n.kind == NodeKind::kProjection || n.kind == NodeKind::kAntiProjection) ++k;
  return k;
}

std::vector<NodeId> QueryTree::post_order() const {
  // Pre-order numbering means reverse id order visits children first.
  std::vector<NodeId> order(nodes_.size());
  std::iota(order.rbegin(), order.rend(), NodeId{0});
  return order;
}

std::vector<NodeId> QueryTree::binding_groups() const {
  std::vector<NodeId> group(nodes_.size());
  std::iota(group.begin(), group.end(), NodeId{0});
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    const auto& n = nodes_[id];
    if (n.kind == NodeKind::kIntersection || n.kind == NodeKind::kUnion)
      for (NodeId c : n.children) group[c] = group[id];
  }
  return group;
}

void QueryTree::check_ids(std::size_t num_entities, std::size_t num_relations) const {
  for (const auto& n : nodes_) {
    if (n.kind == NodeKind::kConstant && num_entities && n.entity.index() >= num_entities)
      fail(ErrorCode::kInvalidArgument, "entity id " + std::to_string(n.entity.value) + " out of range");
    if ((n.kind == NodeKind::kProjection || n.kind == NodeKind::kAntiProjection) && num_relations &&
        n.relation.index() >= num_relations)
      fail(ErrorCode::kInvalidArgument, "relation id " + std::to_string(n.relation.value) + " out of range");
  }
}

std::string QueryTree::shape(bool with_ids) const {
  std::function<std::string(NodeId)> rec = [&](NodeId id) -> std::string {
    const auto& n = nodes_[id];
    std::string s;
    switch (n.kind) {
      case NodeKind::kConstant:
        return with_ids ? "e" + std::to_string(n.entity.value) : "c";
      case NodeKind::kIntersection: s = "i"; break;
      case NodeKind::kUnion: s = "u"; break;
      case NodeKind::kProjection: s = "p"; break;
      case NodeKind::kAntiProjection: s = "n"; break;
    }
    if (with_ids && (n.kind == NodeKind::kProjection || n.kind == NodeKind::kAntiProjection))
      s += "[r" + std::to_string(n.relation.value) + "]";
    s += "(";
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      if (i) s += ",";
      s += rec(n.children[i]);
    }
    return s + ")";
  };
  return nodes_.empty() ? std::string() : rec(0);
}

NodeId TreeBuilder::add(TreeNode node) {
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId TreeBuilder::constant(EntityId e) {
  TreeNode n;
  n.kind = NodeKind::kConstant;
  n.entity = e;
  return add(std::move(n));
}

NodeId TreeBuilder::projection(std::string var, RelationId r, NodeId child) {
  TreeNode n;
  n.kind = NodeKind::kProjection;
  n.variable = std::move(var);
  n.relation = r;
  n.children = {child};
  return add(std::move(n));
}

NodeId TreeBuilder::anti_projection(std::string var, RelationId r, NodeId child) {
  TreeNode n;
  n.kind = NodeKind::kAntiProjection;
  n.variable = std::move(var);
  n.relation = r;
  n.children = {child};
  return add(std::move(n));
}

NodeId TreeBuilder::intersection(std::string var, std::vector<NodeId> children) {
  TreeNode n;
  n.kind = NodeKind::kIntersection;
  n.variable = std::move(var);
  n.children = std::move(children);
  return add(std::move(n));
}

NodeId TreeBuilder::merge_union(std::string var, std::vector<NodeId> children) {
  TreeNode n;
  n.kind = NodeKind::kUnion;
  n.variable = std::move(var);
  n.children = std::move(children);
  return add(std::move(n));
}

QueryTree TreeBuilder::build(NodeId root) && { return QueryTree(std::move(nodes_), root); }

}  // namespace qto
