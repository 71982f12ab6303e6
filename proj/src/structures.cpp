#include "structures.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "parallel.hpp"
#include "random.hpp"

namespace qto {

using nlohmann::json;

namespace {

SlotAtom anchored(int rel, int anchor, std::string to, bool neg = false) { return {rel, neg, anchor, {}, std::move(to)}; }
SlotAtom chained(int rel, std::string from, std::string to, bool neg = false) {
  return {rel, neg, -1, std::move(from), std::move(to)};
}

StructureTemplate chain(const std::string& name, int hops) {
  StructureTemplate t{name, 1, hops, {{}}};
  std::string prev;
  for (int k = 0; k < hops; ++k) {
    const std::string to = k + 1 == hops ? kAnswerVariable : "v" + std::to_string(k + 1);
    t.disjuncts[0].push_back(k == 0 ? anchored(0, 0, to) : chained(k, prev, to));
    prev = to;
  }
  return t;
}

std::vector<StructureTemplate> make_standard() {
  const std::string q = kAnswerVariable;
  std::vector<StructureTemplate> s;
  s.push_back(chain("1p", 1));
  s.push_back(chain("2p", 2));
  s.push_back(chain("3p", 3));
  s.push_back({"2i", 2, 2, {{anchored(0, 0, q), anchored(1, 1, q)}}});
  s.push_back({"3i", 3, 3, {{anchored(0, 0, q), anchored(1, 1, q), anchored(2, 2, q)}}});
  s.push_back({"pi", 2, 3, {{anchored(0, 0, "v1"), chained(1, "v1", q), anchored(2, 1, q)}}});
  s.push_back({"ip", 2, 3, {{anchored(0, 0, "v1"), anchored(1, 1, "v1"), chained(2, "v1", q)}}});
  s.push_back({"2u", 2, 2, {{anchored(0, 0, q)}, {anchored(1, 1, q)}}});
  s.push_back({"up", 2, 3, {{anchored(0, 0, "v1"), chained(2, "v1", q)}, {anchored(1, 1, "v1"), chained(2, "v1", q)}}});
  s.push_back({"2in", 2, 2, {{anchored(0, 0, q), anchored(1, 1, q, true)}}});
  s.push_back({"3in", 3, 3, {{anchored(0, 0, q), anchored(1, 1, q), anchored(2, 2, q, true)}}});
  s.push_back({"inp", 2, 3, {{anchored(0, 0, "v1"), anchored(1, 1, "v1", true), chained(2, "v1", q)}}});
  s.push_back({"pin", 2, 3, {{anchored(0, 0, "v1"), chained(1, "v1", q), anchored(2, 1, q, true)}}});
  s.push_back({"pni", 2, 3, {{anchored(0, 0, "v1"), chained(1, "v1", q, true), anchored(2, 1, q)}}});
  return s;
}

}  // namespace

DnfQuery StructureTemplate::instantiate(std::span<const EntityId> anchors, std::span<const RelationId> relations) const {
  if (anchors.size() != static_cast<std::size_t>(num_anchors) ||
      relations.size() != static_cast<std::size_t>(num_relations))
    fail(ErrorCode::kInvalidArgument, "structure " + name + " needs " + std::to_string(num_anchors) + " anchors and " +
                                          std::to_string(num_relations) + " relations");
  DnfQuery q;
  q.answer = kAnswerVariable;
  for (const auto& conj : disjuncts) {
    auto& atoms = q.disjuncts.emplace_back();
    for (const auto& a : conj) {
      Atom atom;
      atom.relation = relations[a.relation];
      atom.negated = a.negated;
      atom.from = a.anchor >= 0 ? Term::constant(anchors[a.anchor]) : Term::var(a.from_var);
      atom.to = a.to;
      atoms.push_back(std::move(atom));
    }
  }
  q.normalize();
  return q;
}

QueryTree StructureTemplate::placeholder_tree() const {
  std::vector<EntityId> anchors;
  std::vector<RelationId> relations;
  for (int k = 0; k < num_anchors; ++k) anchors.emplace_back(static_cast<std::uint32_t>(k));
  for (int k = 0; k < num_relations; ++k) relations.emplace_back(static_cast<std::uint32_t>(2 * k));
  return to_computation_tree(instantiate(anchors, relations));
}

const std::vector<StructureTemplate>& standard_structures() {
  static const std::vector<StructureTemplate> s = make_standard();
  return s;
}

const std::vector<StructureTemplate>& extended_structures() {
  static const std::vector<StructureTemplate> s = {chain("4p", 4), chain("5p", 5)};
  return s;
}

const StructureTemplate& find_structure(const std::string& name) {
  for (const auto* list : {&standard_structures(), &extended_structures()})
    for (const auto& t : *list)
      if (t.name == name) return t;
  fail(ErrorCode::kInvalidArgument, "unknown query structure '" + name + "'");
}

std::vector<std::string> parse_structure_list(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    if (item == "all") {
      for (const auto& t : standard_structures()) out.push_back(t.name);
      continue;
    }
    find_structure(item);
    if (std::find(out.begin(), out.end(), item) == out.end()) out.push_back(item);
  }
  if (out.empty()) fail(ErrorCode::kInvalidArgument, "empty structure list");
  return out;
}

bool is_negation_structure(const std::string& name) {
  return name == "2in" || name == "3in" || name == "inp" || name == "pin" || name == "pni";
}
bool is_epfo_structure(const std::string& name) {
  static const std::set<std::string> s{"1p", "2p", "3p", "2i", "3i", "pi", "ip", "2u", "up"};
  return s.count(name) != 0;
}
bool is_ood_structure(const std::string& name) { return name == "pi" || name == "ip" || name == "2u" || name == "up"; }
bool is_interpretable_structure(const std::string& name) {
  static const std::set<std::string> s{"2p", "3p", "pi", "ip", "up", "inp", "pin", "pni", "4p", "5p"};
  return s.count(name) != 0;
}

QuerySplit parse_query_split(const std::string& s) {
  if (s == "valid") return QuerySplit::kValid;
  if (s == "test") return QuerySplit::kTest;
  fail(ErrorCode::kInvalidArgument, "split must be 'valid' or 'test', got '" + s + "'");
}
const char* to_string(QuerySplit s) { return s == QuerySplit::kValid ? "valid" : "test"; }

GraphSelector lower_graph(QuerySplit s) { return s == QuerySplit::kValid ? GraphSelector::kTrain : GraphSelector::kTrainValid; }
GraphSelector upper_graph(QuerySplit s) { return s == QuerySplit::kValid ? GraphSelector::kTrainValid : GraphSelector::kFull; }

void compute_answers(const KnowledgeGraph& kg, QuerySplit split, const QueryTree& tree, std::vector<EntityId>& easy,
                     std::vector<EntityId>& hard) {
  easy = kg.traverse_answers(lower_graph(split), tree);
  const auto upper = kg.traverse_answers(upper_graph(split), tree);
  hard.clear();
  std::set_difference(upper.begin(), upper.end(), easy.begin(), easy.end(), std::back_inserter(hard));
}

// ---- generation --------------------------------------------------------------

namespace {

struct Edge {
  RelationId relation;
  EntityId source;
};

class Grounder {
 public:
  Grounder(const KnowledgeGraph& kg, QuerySplit split, const StructureTemplate& tpl, Rng& rng)
      : kg_(kg), upper_(kg.graph(upper_graph(split))), tpl_(tpl), tree_(tpl.placeholder_tree()), rng_(rng) {
    for (int s = 0; s <= static_cast<int>(split == QuerySplit::kValid ? Split::kValid : Split::kTest); ++s) {
      const auto triples = kg.split(static_cast<Split>(s));
      upper_triples_.insert(upper_triples_.end(), triples.begin(), triples.end());
    }
    const auto held_out = kg.split(split == QuerySplit::kValid ? Split::kValid : Split::kTest);
    held_out_.assign(held_out.begin(), held_out.end());
  }

  bool feasible() const { return !held_out_.empty(); }

  /// One attempt; returns the instantiated query or nothing.
  std::optional<DnfQuery> attempt() {
    anchors_.assign(tpl_.num_anchors, EntityId());
    relations_.assign(tpl_.num_relations, RelationId());
    const Triple& seed_edge = held_out_[uniform_index(rng_, held_out_.size())];
    const Edge preferred{seed_edge.relation, seed_edge.head};
    if (!ground(QueryTree::root(), seed_edge.tail, &preferred)) return std::nullopt;
    return tpl_.instantiate(anchors_, relations_);
  }

 private:
  bool ground(NodeId id, EntityId e, const Edge* preferred) {
    const auto& n = tree_.node(id);
    switch (n.kind) {
      case NodeKind::kConstant:
        anchors_[n.entity.value] = e;
        return true;
      case NodeKind::kIntersection:
      case NodeKind::kUnion: {
        bool passed = false;
        for (NodeId c : n.children) {
          const bool take = !passed && tree_.node(c).kind == NodeKind::kProjection;
          passed = passed || take;
          if (!ground(c, e, take ? preferred : nullptr)) return false;
        }
        return true;
      }
      case NodeKind::kProjection: {
        Edge edge;
        if (preferred) {
          edge = *preferred;
        } else {
          auto incoming = incoming_edges(e);
          if (incoming.empty()) return false;
          edge = incoming[uniform_index(rng_, incoming.size())];
        }
        relations_[n.relation.value / 2] = edge.relation;
        return ground(n.children[0], edge.source, nullptr);
      }
      case NodeKind::kAntiProjection: {
        // A source with some r-edge in the graph, but not to e.
        for (int tries = 0; tries < 32; ++tries) {
          const Triple& t = upper_triples_[uniform_index(rng_, upper_triples_.size())];
          if (t.tail == e || upper_.contains(t.head, t.relation, e)) continue;
          relations_[n.relation.value / 2] = t.relation;
          return ground(n.children[0], t.head, nullptr);
        }
        return false;
      }
    }
    return false;
  }

  std::vector<Edge> incoming_edges(EntityId e) const {
    std::vector<Edge> out;
    for (std::uint32_t r = 0; r < kg_.num_relations(); ++r)
      for (EntityId s : upper_.tails(e, RelationId(r).inverse())) out.push_back({RelationId(r), s});
    return out;
  }

  const KnowledgeGraph& kg_;
  const AdjacencyIndex& upper_;
  const StructureTemplate& tpl_;
  QueryTree tree_;
  Rng& rng_;
  std::vector<Triple> upper_triples_;
  std::vector<Triple> held_out_;
  std::vector<EntityId> anchors_;
  std::vector<RelationId> relations_;
};

struct StructureBatch {
  std::vector<GeneratedQuery> queries;
  std::optional<std::string> warning;
};

StructureBatch generate_structure(const KnowledgeGraph& kg, const StructureTemplate& tpl, const GenerateOptions& opts) {
  StructureBatch batch;
  Rng rng(derive_seed(opts.seed, "gen/" + tpl.name + "/" + to_string(opts.split)));
  Grounder grounder(kg, opts.split, tpl, rng);
  if (!grounder.feasible()) {
    batch.warning = tpl.name + ": no held-out edges in the " + std::string(to_string(opts.split)) + " split";
    return batch;
  }
  std::set<std::string> seen;
  const std::size_t budget = opts.per_structure * 1000;
  for (std::size_t attempt = 0; attempt < budget && batch.queries.size() < opts.per_structure; ++attempt) {
    auto q = grounder.attempt();
    if (!q) continue;
    QueryTree tree = to_computation_tree(*q);
    if (!seen.insert(tree.shape(true)).second) continue;
    GeneratedQuery g{tpl.name, std::move(*q), std::move(tree), {}, {}};
    compute_answers(kg, opts.split, g.tree, g.easy, g.hard);
    if (g.hard.empty()) continue;
    batch.queries.push_back(std::move(g));
  }
  if (batch.queries.size() < opts.per_structure)
    batch.warning = tpl.name + ": sampling budget exhausted after " + std::to_string(budget) + " attempts, kept " +
                    std::to_string(batch.queries.size()) + "/" + std::to_string(opts.per_structure) + " queries";
  return batch;
}

}  // namespace

GenerateResult generate_queries(const KnowledgeGraph& kg, const GenerateOptions& opts) {
  std::vector<const StructureTemplate*> templates;
  for (const auto& name : opts.structures) templates.push_back(&find_structure(name));
  std::vector<StructureBatch> batches(templates.size());
  parallel_for(templates.size(), opts.threads,
               [&](std::size_t i) { batches[i] = generate_structure(kg, *templates[i], opts); });
  GenerateResult result;
  for (auto& b : batches) {
    for (auto& q : b.queries) result.queries.push_back(std::move(q));
    if (b.warning) result.warnings.push_back(*b.warning);
  }
  return result;
}

// ---- JSONL -------------------------------------------------------------------

namespace {

json labels(const std::vector<EntityId>& ids, const KnowledgeGraph& kg) {
  json out = json::array();
  for (EntityId e : ids) out.push_back(kg.entity_label(e));
  return out;
}

std::vector<EntityId> resolve_labels(const json& j, const KnowledgeGraph& kg, const char* field) {
  if (!j.is_array()) fail(ErrorCode::kParse, std::string("\"") + field + "\" must be an array of entity labels");
  std::vector<EntityId> out;
  for (const auto& item : j) {
    if (!item.is_string()) fail(ErrorCode::kParse, std::string("\"") + field + "\" must contain strings");
    auto e = kg.find_entity(item.get<std::string>());
    if (!e) fail(ErrorCode::kParse, "unknown entity label '" + item.get<std::string>() + "' in \"" + field + "\"");
    out.push_back(*e);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

json query_record_to_json(const GeneratedQuery& q, const KnowledgeGraph& kg) {
  json j = json::object();
  j["structure"] = q.structure;
  if (!q.query.disjuncts.empty()) j["query"] = query_to_json(q.query, kg);
  j["tree"] = tree_to_json(q.tree, kg);
  j["easy"] = labels(q.easy, kg);
  j["hard"] = labels(q.hard, kg);
  return j;
}

GeneratedQuery query_record_from_json(const json& j, const KnowledgeGraph& kg) {
  if (!j.is_object()) fail(ErrorCode::kParse, "query record must be an object");
  for (const char* key : {"structure", "tree", "easy", "hard"})
    if (!j.contains(key)) fail(ErrorCode::kParse, std::string("query record missing \"") + key + "\"");
  if (!j["structure"].is_string()) fail(ErrorCode::kParse, "\"structure\" must be a string");
  GeneratedQuery q;
  q.structure = j["structure"].get<std::string>();
  q.tree = tree_from_json(j["tree"], kg);
  const auto& tpl = find_structure(q.structure);
  const std::string expected = tpl.placeholder_tree().shape();
  if (q.tree.shape() != expected)
    fail(ErrorCode::kInvalidArgument, "structure mismatch: tree " + q.tree.shape() + " is not a " + q.structure +
                                          " query (" + expected + ")");
  if (j.contains("query")) q.query = query_from_json(j["query"], kg);
  q.easy = resolve_labels(j["easy"], kg, "easy");
  q.hard = resolve_labels(j["hard"], kg, "hard");
  return q;
}

void save_queries(const std::string& path, std::span<const GeneratedQuery> queries, const KnowledgeGraph& kg) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write '" + path + "'");
  for (const auto& q : queries) out << query_record_to_json(q, kg).dump() << '\n';
  if (!out) fail(ErrorCode::kIo, "write failed for '" + path + "'");
}

std::vector<GeneratedQuery> load_queries(const std::string& path, const KnowledgeGraph& kg) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open '" + path + "'");
  std::vector<GeneratedQuery> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(query_record_from_json(json::parse(line), kg));
    } catch (const json::parse_error& e) {
      fail(ErrorCode::kParse, path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      fail(e.code(), path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace qto
