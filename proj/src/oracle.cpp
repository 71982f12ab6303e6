#include "oracle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "parallel.hpp"
#include "qto_solver.hpp"
#include "random.hpp"
#include "structures.hpp"

namespace qto::oracle {

namespace {

double entry(const NeuralAdjacency& m, RelationId r, EntityId from, EntityId to, double alpha) {
  const double v = m.relation(r).at(from.index(), to.index());
  return alpha == 1.0 ? v : std::min(1.0, alpha * v);
}

EntityId lookup(const VariableAssignment& a, const std::string& var) {
  auto it = a.find(var);
  if (it == a.end()) fail(ErrorCode::kInvalidArgument, "assignment is missing variable '" + var + "'");
  return it->second;
}

}  // namespace

double eval_dnf(const DnfQuery& q, const VariableAssignment& assignment, const NeuralAdjacency& m,
                const NegationScaling& scaling) {
  const bool has_neg = q.has_negation();
  double none_true = 1.0;
  for (const auto& conj : q.disjuncts) {
    double conj_value = 1.0;
    for (const auto& atom : conj) {
      const EntityId from = atom.from.is_constant ? atom.from.entity : lookup(assignment, atom.from.variable);
      const EntityId to = lookup(assignment, atom.to);
      if (from.index() >= m.num_entities() || to.index() >= m.num_entities())
        fail(ErrorCode::kInvalidArgument, "assignment entity out of range");
      const double v = entry(m, atom.relation, from, to, scaling.alpha_for(has_neg, atom.negated));
      conj_value *= atom.negated ? 1.0 - v : v;
    }
    none_true *= 1.0 - conj_value;
  }
  return 1.0 - none_true;
}

double eval_tree(const QueryTree& tree, const std::vector<EntityId>& assignment, const NeuralAdjacency& m,
                 const NegationScaling& scaling) {
  if (assignment.size() != tree.size())
    fail(ErrorCode::kInvalidArgument, "incomplete assignment: " + std::to_string(assignment.size()) + " entities for " +
                                          std::to_string(tree.size()) + " nodes");
  const bool has_neg = tree.has_negation();
  auto entity_of = [&](NodeId id) {
    const auto& n = tree.node(id);
    const EntityId e = n.kind == NodeKind::kConstant ? n.entity : assignment[id];
    if (e.index() >= m.num_entities()) fail(ErrorCode::kInvalidArgument, "assignment entity out of range");
    return e;
  };
  std::vector<double> value(tree.size());
  for (NodeId id = static_cast<NodeId>(tree.size()); id-- > 0;) {
    const auto& n = tree.node(id);
    switch (n.kind) {
      case NodeKind::kConstant:
        value[id] = 1.0;
        break;
      case NodeKind::kIntersection:
      case NodeKind::kUnion: {
        double acc = 1.0;
        for (NodeId c : n.children) {
          if (entity_of(c) != entity_of(id))
            fail(ErrorCode::kInvalidArgument, "copies of variable '" + n.variable + "' are bound to different entities");
          acc *= n.kind == NodeKind::kIntersection ? value[c] : 1.0 - value[c];
        }
        value[id] = n.kind == NodeKind::kIntersection ? acc : 1.0 - acc;
        break;
      }
      case NodeKind::kProjection:
      case NodeKind::kAntiProjection: {
        const NodeId c = n.children[0];
        const bool neg = n.kind == NodeKind::kAntiProjection;
        const double v = entry(m, n.relation, entity_of(c), entity_of(id), scaling.alpha_for(has_neg, neg));
        value[id] = value[c] * (neg ? 1.0 - v : v);
        break;
      }
    }
  }
  return value[0];
}

OracleResult brute_force_max(const QueryTree& tree, const NeuralAdjacency& m, const NegationScaling& scaling,
                             std::uint64_t budget) {
  tree.check_ids(m.num_entities(), m.num_relations());
  const std::size_t n = m.num_entities();
  const auto groups_of = tree.binding_groups();
  std::vector<NodeId> groups;
  for (NodeId id = 0; id < tree.size(); ++id)
    if (tree.node(id).kind != NodeKind::kConstant && groups_of[id] == id) groups.push_back(id);

  double combos = 1.0;
  for (std::size_t g = 0; g < groups.size(); ++g) combos *= static_cast<double>(n);
  if (combos > static_cast<double>(budget))
    fail(ErrorCode::kBudgetExceeded, "brute force needs " + std::to_string(n) + "^" + std::to_string(groups.size()) +
                                         " assignments, over the budget of " + std::to_string(budget) +
                                         "; use a smaller instance");

  OracleResult result;
  result.per_answer_max.assign(n, 0.0);
  if (n == 0) return result;

  // The root group comes first, so slicing on it splits the enumeration into
  // contiguous lexicographic blocks.
  struct Block {
    double max_value = -1.0;
    std::vector<std::vector<EntityId>> ties;
  };
  std::vector<Block> blocks(n);
  std::vector<std::size_t> slot(tree.size(), 0);
  for (NodeId id = 0; id < tree.size(); ++id) {
    if (tree.node(id).kind == NodeKind::kConstant) continue;
    slot[id] = static_cast<std::size_t>(std::find(groups.begin(), groups.end(), groups_of[id]) - groups.begin());
  }

  parallel_for(n, resolve_threads(0), [&](std::size_t root_entity) {
    Block& block = blocks[root_entity];
    std::vector<std::uint32_t> digits(groups.size(), 0);
    digits[0] = static_cast<std::uint32_t>(root_entity);
    std::vector<EntityId> assignment(tree.size());
    while (true) {
      for (NodeId id = 0; id < tree.size(); ++id) {
        const auto& node = tree.node(id);
        assignment[id] = node.kind == NodeKind::kConstant ? node.entity : EntityId(digits[slot[id]]);
      }
      const double v = eval_tree(tree, assignment, m, scaling);
      if (v > block.max_value) {
        block.max_value = v;
        block.ties.clear();
      }
      if (v == block.max_value) block.ties.push_back(assignment);
      bool done = true;
      for (std::size_t pos = groups.size(); pos-- > 1;) {
        if (++digits[pos] < n) {
          done = false;
          break;
        }
        digits[pos] = 0;
      }
      if (done) break;
    }
  });

  result.max_value = 0.0;
  for (const auto& b : blocks) result.max_value = std::max(result.max_value, b.max_value);
  for (std::size_t e = 0; e < n; ++e) {
    result.per_answer_max[e] = blocks[e].max_value;
    if (blocks[e].max_value == result.max_value)
      for (auto& a : blocks[e].ties) result.argmax_assignments.push_back(std::move(a));
  }
  return result;
}

bool check_interpretation(const QueryTree& tree, const std::vector<EntityId>& assignment, const KnowledgeGraph& kg) {
  if (assignment.size() != tree.size()) fail(ErrorCode::kInvalidArgument, "incomplete assignment");
  const auto& full = kg.graph(GraphSelector::kFull);
  auto entity_of = [&](NodeId id) {
    const auto& n = tree.node(id);
    return n.kind == NodeKind::kConstant ? n.entity : assignment[id];
  };
  std::vector<char> ok(tree.size(), 0);
  for (NodeId id = static_cast<NodeId>(tree.size()); id-- > 0;) {
    const auto& n = tree.node(id);
    switch (n.kind) {
      case NodeKind::kConstant:
        ok[id] = 1;
        break;
      case NodeKind::kIntersection:
        ok[id] = std::all_of(n.children.begin(), n.children.end(), [&](NodeId c) { return ok[c] != 0; });
        break;
      case NodeKind::kUnion:
        ok[id] = std::any_of(n.children.begin(), n.children.end(), [&](NodeId c) { return ok[c] != 0; });
        break;
      case NodeKind::kProjection:
      case NodeKind::kAntiProjection: {
        const NodeId c = n.children[0];
        const bool edge = entity_of(c).index() < kg.num_entities() && entity_of(id).index() < kg.num_entities() &&
                          full.contains(entity_of(c), n.relation, entity_of(id));
        ok[id] = ok[c] && (n.kind == NodeKind::kProjection ? edge : !edge);
        break;
      }
    }
  }
  return ok[0] != 0;
}

std::vector<double> dense_matrix(const NeuralAdjacency& m, RelationId r, double alpha) {
  const std::size_t n = m.num_entities();
  std::vector<double> d(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      d[i * n + j] = entry(m, r, EntityId(static_cast<std::uint32_t>(i)), EntityId(static_cast<std::uint32_t>(j)), alpha);
  return d;
}

std::vector<double> dense_project(const std::vector<double>& child, const std::vector<double>& dense, std::size_t n) {
  std::vector<double> out(n, 0.0);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) out[j] = std::max(out[j], child[i] * dense[i * n + j]);
  return out;
}

std::vector<double> dense_anti_project(const std::vector<double>& child, const std::vector<double>& dense,
                                       std::size_t n) {
  std::vector<double> out(n, 0.0);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) out[j] = std::max(out[j], child[i] * (1.0 - dense[i * n + j]));
  return out;
}

Instance random_instance(const std::string& structure, std::uint64_t seed, const InstanceOptions& opts) {
  Rng rng(seed);
  const std::size_t lo = std::max<std::size_t>(3, opts.max_entities / 2);
  const std::size_t n = lo + uniform_index(rng, opts.max_entities - lo + 1);
  const std::size_t base = 1 + uniform_index(rng, std::max<std::size_t>(1, opts.max_relations));
  const double density = uniform_real(rng, 0.05, 0.25);

  KnowledgeGraphLoader loader;
  loader.reserve_entities(n);
  loader.reserve_relations(base);
  for (std::uint32_t r = 0; r < base; ++r)
    for (std::uint32_t h = 0; h < n; ++h)
      for (std::uint32_t t = 0; t < n; ++t)
        if (uniform_unit(rng) < density) loader.add_triple(h, r, t, Split::kTrain);
  Instance inst;
  inst.kg = std::move(loader).build();
  inst.structure = structure;

  const double fuzzy = uniform_real(rng, 0.1, 0.6);
  const double delta = NeuralAdjacency::kDefaultDelta;
  const auto& train = inst.kg.graph(GraphSelector::kTrain);
  std::vector<SparseRelationMatrix> mats;
  for (std::uint32_t r = 0; r < inst.kg.num_relations(); ++r) {
    std::vector<MatrixEntry> entries;
    for (std::uint32_t h = 0; h < n; ++h)
      for (std::uint32_t t = 0; t < n; ++t) {
        if (train.contains(EntityId(h), RelationId(r), EntityId(t)))
          entries.push_back({h, t, 1.0});
        else if (uniform_unit(rng) < fuzzy)
          entries.push_back({h, t, uniform_real(rng, delta, 1.0 - delta)});
      }
    mats.emplace_back(n, entries);
  }
  inst.matrix = NeuralAdjacency(n, delta, 0.0, std::move(mats));

  const auto& tpl = find_structure(structure);
  std::vector<EntityId> anchors;
  std::vector<RelationId> relations;
  for (int k = 0; k < tpl.num_anchors; ++k) anchors.emplace_back(static_cast<std::uint32_t>(uniform_index(rng, n)));
  for (int k = 0; k < tpl.num_relations; ++k)
    relations.emplace_back(static_cast<std::uint32_t>(uniform_index(rng, inst.kg.num_relations())));
  inst.tree = to_computation_tree(tpl.instantiate(anchors, relations));
  return inst;
}

CheckReport certify_optimality(std::uint64_t seed, std::size_t num_instances, std::size_t max_entities,
                               std::uint64_t budget, double tolerance) {
  if (max_entities < 3) fail(ErrorCode::kInvalidArgument, "max-entities must be at least 3");
  const auto& structures = standard_structures();
  CheckReport report;
  InstanceOptions opts;
  opts.max_entities = max_entities;
  for (std::size_t i = 0; i < num_instances; ++i) {
    const auto& name = structures[i % structures.size()].name;
    const Instance inst = random_instance(name, derive_seed(seed, i, i % structures.size()), opts);
    ++report.total;
    const ForwardCache cache = forward(inst.tree, inst.matrix);
    const OracleResult truth = brute_force_max(inst.tree, inst.matrix, {}, budget);
    std::ostringstream problem;
    double forward_max = 0.0;
    for (std::size_t e = 0; e < truth.per_answer_max.size(); ++e) {
      forward_max = std::max(forward_max, cache.root()[e]);
      if (std::abs(cache.root()[e] - truth.per_answer_max[e]) > tolerance && problem.tellp() == 0)
        problem << "forward[" << e << "]=" << cache.root()[e] << " vs brute force " << truth.per_answer_max[e];
      const Assignment a = backward(inst.tree, cache, inst.matrix, EntityId(static_cast<std::uint32_t>(e)));
      const double re = eval_tree(inst.tree, a.entities, inst.matrix);
      if (std::abs(re - cache.root()[e]) > tolerance && problem.tellp() == 0)
        problem << "backward(" << e << ") re-evaluates to " << re << ", forward " << cache.root()[e];
    }
    if (std::abs(forward_max - truth.max_value) > tolerance && problem.tellp() == 0)
      problem << "max " << forward_max << " vs brute force " << truth.max_value;
    if (problem.tellp() == 0)
      ++report.passed;
    else
      report.failures.push_back("instance " + std::to_string(i) + " (" + name + "): " + problem.str());
  }
  return report;
}

}  // namespace qto::oracle
