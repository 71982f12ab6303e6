#include "query_model.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <queue>

namespace qto {

using nlohmann::json;

std::set<std::string> DnfQuery::variables() const {
  std::set<std::string> vars{answer};
  for (const auto& conj : disjuncts)
    for (const auto& a : conj) {
      vars.insert(a.to);
      if (!a.from.is_constant) vars.insert(a.from.variable);
    }
  return vars;
}

bool DnfQuery::has_negation() const {
  for (const auto& conj : disjuncts)
    for (const auto& a : conj)
      if (a.negated) return true;
  return false;
}

void DnfQuery::normalize() {
  if (answer.empty()) fail(ErrorCode::kParse, "query has no answer variable");
  if (disjuncts.empty()) fail(ErrorCode::kParse, "query has no disjuncts");
  bool answer_used = false;
  for (std::size_t i = 0; i < disjuncts.size(); ++i) {
    if (disjuncts[i].empty()) fail(ErrorCode::kParse, "disjunct " + std::to_string(i) + " is empty");
    for (auto& a : disjuncts[i]) {
      a.conjunct_index = i;
      if (a.to.empty()) fail(ErrorCode::kParse, "atom target must be a named variable");
      if (!a.from.is_constant && a.from.variable.empty()) fail(ErrorCode::kParse, "atom source variable has no name");
      if (!a.from.is_constant && a.from.variable == a.to)
        fail(ErrorCode::kUnsupportedQuery, "self-loop atom on variable '" + a.to + "'");
      if (a.to == answer || (!a.from.is_constant && a.from.variable == answer)) answer_used = true;
    }
  }
  if (!answer_used) fail(ErrorCode::kParse, "answer variable '" + answer + "' is not used by any atom");
}

// ---- JSON --------------------------------------------------------------------

namespace {

const json& require(const json& j, const char* key, const char* context) {
  if (!j.is_object() || !j.contains(key)) fail(ErrorCode::kParse, std::string(context) + ": missing \"" + key + "\"");
  return j.at(key);
}

std::string require_string(const json& j, const char* key, const char* context) {
  const auto& v = require(j, key, context);
  if (!v.is_string()) fail(ErrorCode::kParse, std::string(context) + ": \"" + key + "\" must be a string");
  return v.get<std::string>();
}

EntityId resolve_entity(const KnowledgeGraph& kg, const std::string& label) {
  auto e = kg.find_entity(label);
  if (!e) fail(ErrorCode::kParse, "unknown entity label '" + label + "'");
  return *e;
}

RelationId resolve_relation(const KnowledgeGraph& kg, const std::string& label) {
  auto r = kg.find_relation(label);
  if (!r) fail(ErrorCode::kParse, "unknown relation label '" + label + "'");
  return *r;
}

}  // namespace

DnfQuery query_from_json(const json& j, const KnowledgeGraph& kg) {
  DnfQuery q;
  q.answer = require_string(j, "answer", "query");
  const auto& disj = require(j, "disjuncts", "query");
  if (!disj.is_array()) fail(ErrorCode::kParse, "query: \"disjuncts\" must be an array of atom arrays");
  for (const auto& conj : disj) {
    if (!conj.is_array()) fail(ErrorCode::kParse, "query: each disjunct must be an array of atoms");
    auto& atoms = q.disjuncts.emplace_back();
    for (const auto& aj : conj) {
      Atom a;
      a.relation = resolve_relation(kg, require_string(aj, "rel", "atom"));
      if (aj.contains("neg")) {
        if (!aj["neg"].is_boolean()) fail(ErrorCode::kParse, "atom: \"neg\" must be a boolean");
        a.negated = aj["neg"].get<bool>();
      }
      const auto& from = require(aj, "from", "atom");
      if (from.is_object() && from.contains("const") && from.size() == 1) {
        a.from = Term::constant(resolve_entity(kg, require_string(from, "const", "atom.from")));
      } else if (from.is_object() && from.contains("var") && from.size() == 1) {
        a.from = Term::var(require_string(from, "var", "atom.from"));
      } else {
        fail(ErrorCode::kParse, "atom: \"from\" must be {\"const\": label} or {\"var\": name}");
      }
      const auto& to = require(aj, "to", "atom");
      if (to.is_object() && to.contains("const"))
        fail(ErrorCode::kParse, "atom: \"to\" must be a variable, not a constant");
      if (to.is_string()) {
        a.to = to.get<std::string>();
      } else if (to.is_object() && to.contains("var") && to.size() == 1) {
        a.to = require_string(to, "var", "atom.to");
      } else {
        fail(ErrorCode::kParse, "atom: \"to\" must be a variable name or {\"var\": name}");
      }
      atoms.push_back(std::move(a));
    }
  }
  q.normalize();
  return q;
}

DnfQuery parse_query(const std::string& text, const KnowledgeGraph& kg) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kParse, std::string("query JSON: ") + e.what());
  }
  return query_from_json(j, kg);
}

json query_to_json(const DnfQuery& q, const KnowledgeGraph& kg) {
  json disj = json::array();
  for (const auto& conj : q.disjuncts) {
    json atoms = json::array();
    for (const auto& a : conj) {
      json aj = json::object();
      aj["rel"] = kg.relation_label(a.relation);
      if (a.negated) aj["neg"] = true;
      aj["from"] = a.from.is_constant ? json{{"const", kg.entity_label(a.from.entity)}} : json{{"var", a.from.variable}};
      aj["to"] = a.to;
      atoms.push_back(std::move(aj));
    }
    disj.push_back(std::move(atoms));
  }
  return json{{"answer", q.answer}, {"disjuncts", std::move(disj)}};
}

std::string serialize_query(const DnfQuery& q, const KnowledgeGraph& kg) { return query_to_json(q, kg).dump(); }

// ---- DNF -> computation tree -----------------------------------------------

namespace {

using ConjSet = std::uint64_t;
constexpr std::size_t kMaxDisjuncts = 64;

struct DepNode {
  bool is_constant = false;
  EntityId entity;
  std::string name;
};

struct DepEdge {
  std::size_t from = 0, to = 0;  // node indices, atom orientation
  RelationId relation;
  bool negated = false;
  std::size_t conj = 0;
};

/// A merged child->parent link of the rooted dependency tree.
struct Link {
  std::size_t child = 0;
  RelationId relation;  // oriented child -> parent
  bool negated = false;
  ConjSet conjuncts = 0;
};

class TreeConverter {
 public:
  explicit TreeConverter(const DnfQuery& q) : q_(q) {}

  QueryTree run() {
    if (q_.disjuncts.size() > kMaxDisjuncts)
      fail(ErrorCode::kUnsupportedQuery, "more than 64 disjuncts are not supported");
    build_dependency_graph();
    orient_and_merge();
    check_disjunct_connectivity();
    const ConjSet all = q_.disjuncts.size() == 64 ? ~ConjSet{0} : ((ConjSet{1} << q_.disjuncts.size()) - 1);
    const NodeId root = build(root_, all, children_[root_]);
    return std::move(builder_).build(root);
  }

 private:
  // Step 1: one node per variable and per constant occurrence; undirected
  // edges labelled by relation, negation and disjunct.
  void build_dependency_graph() {
    std::map<std::string, std::size_t> var_index;
    auto var_node = [&](const std::string& name) {
      auto [it, inserted] = var_index.try_emplace(name, nodes_.size());
      if (inserted) nodes_.push_back({false, EntityId(), name});
      return it->second;
    };
    root_ = var_node(q_.answer);
    for (std::size_t c = 0; c < q_.disjuncts.size(); ++c)
      for (const auto& a : q_.disjuncts[c]) {
        std::size_t from;
        if (a.from.is_constant) {
          from = nodes_.size();
          nodes_.push_back({true, a.from.entity, {}});
        } else {
          from = var_node(a.from.variable);
        }
        edges_.push_back({from, var_node(a.to), a.relation, a.negated, c});
      }
  }

  // Root the multigraph at the answer variable, orient every edge child ->
  // parent (inverting relations that point away from the root), and merge
  // parallel edges of the same relation from different disjuncts.
  void orient_and_merge() {
    const std::size_t n = nodes_.size();
    std::vector<std::vector<std::size_t>> incident(n);
    for (std::size_t k = 0; k < edges_.size(); ++k) {
      incident[edges_[k].from].push_back(k);
      incident[edges_[k].to].push_back(k);
    }
    std::vector<std::size_t> parent(n, SIZE_MAX);
    std::vector<char> seen(n, 0);
    std::vector<std::size_t> order{root_};
    seen[root_] = 1;
    for (std::size_t head = 0; head < order.size(); ++head) {
      const std::size_t u = order[head];
      for (std::size_t k : incident[u]) {
        const std::size_t v = edges_[k].from == u ? edges_[k].to : edges_[k].from;
        if (v == parent[u] || (v != root_ && parent[v] == u)) continue;  // parallel edges, merged below
        if (seen[v]) fail(ErrorCode::kUnsupportedQuery, "query dependency graph is cyclic; only tree-shaped queries are supported");
        seen[v] = 1;
        parent[v] = u;
        order.push_back(v);
      }
    }
    for (std::size_t v = 0; v < n; ++v)
      if (!seen[v]) fail(ErrorCode::kUnsupportedQuery, "query dependency graph is disconnected");

    children_.assign(n, {});
    for (std::size_t v : order) {
      if (v == root_) continue;
      const std::size_t p = parent[v];
      Link link;
      link.child = v;
      bool first = true;
      for (std::size_t k : incident[v]) {
        const auto& e = edges_[k];
        const bool toward_parent = e.from == v && e.to == p;
        const bool away_from_parent = e.from == p && e.to == v;
        if (!toward_parent && !away_from_parent) continue;
        const RelationId oriented = toward_parent ? e.relation : e.relation.inverse();
        const ConjSet bit = ConjSet{1} << e.conj;
        if (first) {
          link.relation = oriented;
          link.negated = e.negated;
          first = false;
        } else if (oriented != link.relation || e.negated != link.negated) {
          fail(ErrorCode::kUnsupportedQuery, "parallel atoms between '" + name(v) + "' and '" + name(p) +
                                                 "' use different relations and cannot be merged into a tree");
        }
        if (link.conjuncts & bit)
          fail(ErrorCode::kUnsupportedQuery, "disjunct " + std::to_string(e.conj) + " links '" + name(v) + "' and '" +
                                                 name(p) + "' more than once (cyclic dependency)");
        link.conjuncts |= bit;
      }
      children_[p].push_back(links_.size());
      links_.push_back(link);
    }
  }

  // Each disjunct must form a subtree hanging from the answer variable in
  // which every variable is grounded by a constant.
  void check_disjunct_connectivity() {
    for (std::size_t l = 0; l < links_.size(); ++l) {
      const std::size_t child = links_[l].child;
      ConjSet below = 0;
      for (std::size_t cl : children_[child]) below |= links_[cl].conjuncts;
      if ((below & ~links_[l].conjuncts) != 0)
        fail(ErrorCode::kUnsupportedQuery, "a disjunct uses variable '" + name(child) +
                                               "' without connecting it to the answer variable");
      if (!nodes_[child].is_constant && (links_[l].conjuncts & ~below) != 0)
        fail(ErrorCode::kUnsupportedQuery, "variable '" + name(child) +
                                               "' is not grounded by a constant in every disjunct using it");
    }
    ConjSet at_root = 0;
    for (std::size_t cl : children_[root_]) at_root |= links_[cl].conjuncts;
    for (std::size_t c = 0; c < q_.disjuncts.size(); ++c)
      if (!(at_root & (ConjSet{1} << c)))
        fail(ErrorCode::kUnsupportedQuery, "disjunct " + std::to_string(c) + " does not reach the answer variable");
  }

  // Step 3: variable separation for node u restricted to disjunct set S over
  // the candidate child links.
  NodeId build(std::size_t u, ConjSet s, const std::vector<std::size_t>& candidates) {
    std::vector<std::size_t> shared, rest;
    for (std::size_t l : candidates) {
      const ConjSet c = links_[l].conjuncts & s;
      if (!c) continue;
      (c == s ? shared : rest).push_back(l);
    }
    if (shared.empty() && rest.empty())
      fail(ErrorCode::kUnsupportedQuery, "variable '" + name(u) + "' has no incoming atoms");

    std::vector<NodeId> parts;
    for (std::size_t l : shared) parts.push_back(edge_node(u, l, s));

    if (!rest.empty()) {
      // Union structure: group disjuncts that share any remaining link.
      for (ConjSet bit = 1, left = s; left; bit <<= 1) {
        if (!(left & bit)) continue;
        left &= ~bit;
        bool covered = false;
        for (std::size_t l : rest) covered = covered || (links_[l].conjuncts & bit);
        if (!covered)
          fail(ErrorCode::kUnsupportedQuery, "disjuncts through '" + name(u) +
                                                 "' cannot be factored: one of them has no atom beyond the shared ones");
      }
      std::vector<ConjSet> groups;
      for (std::size_t l : rest) {
        ConjSet g = links_[l].conjuncts & s;
        std::vector<ConjSet> kept;
        for (ConjSet other : groups) {
          if (other & g)
            g |= other;
          else
            kept.push_back(other);
        }
        kept.push_back(g);
        groups = std::move(kept);
      }
      if (groups.size() == 1)
        fail(ErrorCode::kUnsupportedQuery, "no union-mergeable subpath found at variable '" + name(u) +
                                               "': disjuncts overlap without a common atom");
      std::sort(groups.begin(), groups.end(), [](ConjSet a, ConjSet b) { return (a & -a) < (b & -b); });
      std::vector<NodeId> branches;
      for (ConjSet g : groups) branches.push_back(build(u, g, rest));
      parts.push_back(builder_.merge_union(name(u), std::move(branches)));
    }
    if (parts.size() == 1) return parts.front();
    return builder_.intersection(name(u), std::move(parts));
  }

  NodeId edge_node(std::size_t u, std::size_t l, ConjSet s) {
    const auto& link = links_[l];
    const std::size_t v = link.child;
    const NodeId child = nodes_[v].is_constant ? builder_.constant(nodes_[v].entity)
                                               : build(v, s & link.conjuncts, children_[v]);
    return link.negated ? builder_.anti_projection(name(u), link.relation, child)
                        : builder_.projection(name(u), link.relation, child);
  }

  std::string name(std::size_t node) const {
    return nodes_[node].is_constant ? "#" + std::to_string(nodes_[node].entity.value) : nodes_[node].name;
  }

  const DnfQuery& q_;
  std::vector<DepNode> nodes_;
  std::vector<DepEdge> edges_;
  std::size_t root_ = 0;
  std::vector<Link> links_;
  std::vector<std::vector<std::size_t>> children_;
  TreeBuilder builder_;
};

}  // namespace

QueryTree to_computation_tree(const DnfQuery& q) {
  DnfQuery checked = q;
  checked.normalize();
  return TreeConverter(checked).run();
}

// ---- tree JSON ---------------------------------------------------------------

json tree_to_json(const QueryTree& tree, const KnowledgeGraph& kg) {
  std::function<json(NodeId)> rec = [&](NodeId id) -> json {
    const auto& n = tree.node(id);
    switch (n.kind) {
      case NodeKind::kConstant:
        return json{{"const", kg.entity_label(n.entity)}};
      case NodeKind::kProjection:
      case NodeKind::kAntiProjection: {
        json j = json::object();
        j["var"] = n.variable;
        j[n.kind == NodeKind::kProjection ? "proj" : "anti"] = kg.relation_label(n.relation);
        j["from"] = rec(n.children[0]);
        return j;
      }
      case NodeKind::kIntersection:
      case NodeKind::kUnion: {
        json kids = json::array();
        for (NodeId c : n.children) kids.push_back(rec(c));
        json j = json::object();
        j["var"] = n.variable;
        j[n.kind == NodeKind::kIntersection ? "and" : "or"] = std::move(kids);
        return j;
      }
    }
    return json();
  };
  return rec(QueryTree::root());
}

QueryTree tree_from_json(const json& j, const KnowledgeGraph& kg) {
  TreeBuilder b;
  std::function<NodeId(const json&)> rec = [&](const json& node) -> NodeId {
    if (!node.is_object()) fail(ErrorCode::kParse, "tree node must be an object");
    if (node.contains("const")) return b.constant(resolve_entity(kg, require_string(node, "const", "tree")));
    const std::string var = require_string(node, "var", "tree");
    if (node.contains("proj"))
      return b.projection(var, resolve_relation(kg, require_string(node, "proj", "tree")), rec(node.at("from")));
    if (node.contains("anti"))
      return b.anti_projection(var, resolve_relation(kg, require_string(node, "anti", "tree")), rec(node.at("from")));
    for (const char* key : {"and", "or"}) {
      if (!node.contains(key)) continue;
      const auto& kids = node.at(key);
      if (!kids.is_array()) fail(ErrorCode::kParse, std::string("tree: \"") + key + "\" must be an array");
      std::vector<NodeId> children;
      for (const auto& k : kids) children.push_back(rec(k));
      return key[0] == 'a' ? b.intersection(var, std::move(children)) : b.merge_union(var, std::move(children));
    }
    fail(ErrorCode::kParse, "tree node needs one of const/proj/anti/and/or");
  };
  const NodeId root = rec(j);
  return std::move(b).build(root);
}

std::string describe_edge(const QueryTree& tree, NodeId node, const std::vector<EntityId>& assignment,
                          const KnowledgeGraph& kg) {
  const auto& n = tree.node(node);
  const auto& child = tree.node(n.children.at(0));
  const std::string src = child.kind == NodeKind::kConstant ? kg.entity_label(child.entity)
                                                            : kg.entity_label(assignment.at(n.children[0]));
  std::string s = n.kind == NodeKind::kAntiProjection ? "!" : "";
  return s + kg.relation_label(n.relation) + "(" + src + "," + kg.entity_label(assignment.at(node)) + ")";
}

}  // namespace qto
