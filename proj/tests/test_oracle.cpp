#include <algorithm>

#include "oracle.hpp"
#include "qto_solver.hpp"
#include "structures.hpp"
#include "prop_check.hpp"
#include "test_util.hpp"

using namespace qto;
using namespace qto::testing;

namespace {

DnfQuery one_atom(RelationId r, bool neg, EntityId c) {
  DnfQuery q;
  q.answer = "v";
  q.disjuncts = {{Atom{r, neg, Term::constant(c), "v", 0}}};
  q.normalize();
  return q;
}

}  // namespace

TEST(EvalDnf, Examples) {
  const auto m = make_matrix(3, 2, {{0, 0, 1, 1.0}, {0, 0, 2, 0.5}, {0, 1, 2, 0.5}});
  EXPECT_EQ(oracle::eval_dnf(one_atom(RelationId(0), false, EntityId(0)), {{"v", EntityId(1)}}, m), 1.0);
  EXPECT_EQ(oracle::eval_dnf(one_atom(RelationId(0), true, EntityId(0)), {{"v", EntityId(1)}}, m), 0.0);
  DnfQuery u;
  u.answer = "v";
  u.disjuncts = {{Atom{RelationId(0), false, Term::constant(EntityId(0)), "v", 0}},
                 {Atom{RelationId(0), false, Term::constant(EntityId(1)), "v", 1}}};
  u.normalize();
  EXPECT_DOUBLE_EQ(oracle::eval_dnf(u, {{"v", EntityId(2)}}, m), 0.75);
}

TEST(EvalTree, Examples) {
  const auto m = make_matrix(3, 2, {{0, 0, 1, 0.7}, {0, 1, 2, 0.4}});
  TreeBuilder b;
  const auto t = std::move(b).build(b.projection("v?", RelationId(0), b.constant(EntityId(0))));
  EXPECT_EQ(oracle::eval_tree(t, {EntityId(1), EntityId(0)}, m), 0.7);
  const auto p2 = to_computation_tree(find_structure("2p").instantiate(
      std::vector<EntityId>{EntityId(0)}, std::vector<RelationId>{RelationId(0), RelationId(0)}));
  // v1 = 1 gives 0.7 * M[1,2] = 0.28; v1 = 2 hits a zero atom.
  EXPECT_NEAR(oracle::eval_tree(p2, {EntityId(2), EntityId(1), EntityId(0)}, m), 0.28, 1e-15);
  EXPECT_EQ(oracle::eval_tree(p2, {EntityId(2), EntityId(2), EntityId(0)}, m), 0.0);
  // A copy that disagrees with its parent is rejected.
  const auto i2 = find_structure("2i").placeholder_tree();
  EXPECT_THROW(oracle::eval_tree(i2, {EntityId(1), EntityId(2), EntityId(0), EntityId(1), EntityId(1)}, m), Error);
}

TEST(BruteForce, Examples) {
  Rng rng(1);
  const auto m = random_matrix(rng, 8, 2, 0.4, 0.2);
  TreeBuilder b;
  const auto t = std::move(b).build(b.projection("v?", RelationId(1), b.constant(EntityId(3))));
  const auto r = oracle::brute_force_max(t, m);
  for (std::size_t e = 0; e < 8; ++e) EXPECT_EQ(r.per_answer_max[e], m.relation(RelationId(1)).at(3, e));

  const auto zero = make_matrix(4, 6, {});
  const auto ip = to_computation_tree(find_structure("ip").instantiate(
      std::vector<EntityId>{EntityId(0), EntityId(1)},
      std::vector<RelationId>{RelationId(0), RelationId(2), RelationId(4)}));
  const auto z = oracle::brute_force_max(ip, zero);
  EXPECT_EQ(z.max_value, 0.0);
  EXPECT_EQ(z.argmax_assignments.size(), 16u);  // v? and v1 free over 4 entities
  for (const auto& a : z.argmax_assignments) EXPECT_EQ(oracle::eval_tree(ip, a, zero), 0.0);

  EXPECT_THROW(oracle::brute_force_max(ip, zero, {}, 10), Error);
}

TEST(BruteForce, ArgmaxListIsExactAndOrdered) {
  const auto inst = oracle::random_instance("pi", 77, {8, 2});
  const auto r = oracle::brute_force_max(inst.tree, inst.matrix);
  ASSERT_FALSE(r.argmax_assignments.empty());
  EXPECT_TRUE(std::is_sorted(r.argmax_assignments.begin(), r.argmax_assignments.end()));
  for (const auto& a : r.argmax_assignments) EXPECT_EQ(oracle::eval_tree(inst.tree, a, inst.matrix), r.max_value);
}

TEST(TreeVsDnf, AgreeOnEveryAssignment) {
  for (std::uint64_t seed = 0; seed < 8; ++seed)
    for (const auto* list : {&standard_structures(), &extended_structures()})
      for (const auto& tmpl : *list) {
        const auto inst = dnf_instance(tmpl.name, derive_seed(seed, tmpl.name), tmpl.name == "5p" ? 6 : 8);
        const auto r = compare_tree_and_dnf(inst);
        EXPECT_GT(r.assignments, 0u);
        EXPECT_LE(r.max_diff, 1e-12) << tmpl.name << " seed " << seed;
      }
}

TEST(TreeVsDnf, FuzzyMergedEdgeBreaksDistributivity) {
  // up with a fuzzy shared atom: (a m) or (b m) differs from (a or b) m.
  const auto m = make_matrix(3, 6, {{0, 0, 1, 0.5}, {2, 0, 1, 0.5}, {4, 1, 2, 0.5}});
  const auto q = find_structure("up").instantiate(std::vector<EntityId>{EntityId(0), EntityId(0)},
                                                  std::vector<RelationId>{RelationId(0), RelationId(2), RelationId(4)});
  const auto t = to_computation_tree(q);
  oracle::VariableAssignment a{{"v?", EntityId(2)}, {"v1", EntityId(1)}};
  std::vector<EntityId> per_node(t.size());
  for (NodeId id = 0; id < t.size(); ++id)
    per_node[id] = t.node(id).kind == NodeKind::kConstant ? t.node(id).entity : a.at(t.node(id).variable);
  EXPECT_NEAR(oracle::eval_dnf(q, a, m), 1 - 0.75 * 0.75, 1e-15);
  EXPECT_NEAR(oracle::eval_tree(t, per_node, m), 0.75 * 0.5, 1e-15);
}

namespace {

// Solver variant with a deliberately broken projection (first support entry
// of the child ignored); the certification must notice.
std::vector<double> mutated_forward(const QueryTree& t, const NeuralAdjacency& m) {
  std::vector<std::vector<double>> val(t.size());
  const std::size_t n = m.num_entities();
  for (NodeId id : t.post_order()) {
    const auto& node = t.node(id);
    std::vector<double> out(n, 0.0);
    switch (node.kind) {
      case NodeKind::kConstant: out[node.entity.index()] = 1.0; break;
      case NodeKind::kIntersection:
        out.assign(n, 1.0);
        for (NodeId c : node.children)
          for (std::size_t e = 0; e < n; ++e) out[e] *= val[c][e];
        break;
      case NodeKind::kUnion:
        for (NodeId c : node.children)
          for (std::size_t e = 0; e < n; ++e) out[e] = 1 - (1 - out[e]) * (1 - val[c][e]);
        break;
      case NodeKind::kProjection:
      case NodeKind::kAntiProjection: {
        const auto dense = oracle::dense_matrix(m, node.relation);
        const auto& child = val[node.children[0]];
        bool skipped = false;
        for (std::size_t i = 0; i < n; ++i) {
          if (child[i] == 0.0) continue;
          if (!skipped && node.kind == NodeKind::kProjection) {
            skipped = true;
            continue;
          }
          for (std::size_t j = 0; j < n; ++j) {
            const double x = node.kind == NodeKind::kProjection ? dense[i * n + j] : 1 - dense[i * n + j];
            out[j] = std::max(out[j], child[i] * x);
          }
        }
        break;
      }
    }
    val[id] = std::move(out);
  }
  return val[0];
}

}  // namespace

TEST(Certification, DetectsMutatedKernel) {
  std::size_t caught = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 56; ++seed) {
    const auto& name = standard_structures()[seed % 14].name;
    const auto inst = oracle::random_instance(name, seed, {10, 2});
    const auto bf = oracle::brute_force_max(inst.tree, inst.matrix);
    const auto mut = mutated_forward(inst.tree, inst.matrix);
    const auto good = forward(inst.tree, inst.matrix).root();
    bool differs = false;
    for (std::size_t e = 0; e < mut.size(); ++e) {
      differs |= std::abs(mut[e] - bf.per_answer_max[e]) > 1e-9;
      EXPECT_NEAR(good[e], bf.per_answer_max[e], 1e-9);
    }
    caught += differs;
    ++total;
  }
  EXPECT_GT(caught, total / 2) << caught << "/" << total;
}

TEST(Certification, RoundRobinPasses) {
  const auto r = oracle::certify_optimality(42, 56, 15);
  EXPECT_EQ(r.total, 56u);
  EXPECT_EQ(r.passed, r.total);
  for (const auto& f : r.failures) ADD_FAILURE() << f;
}

TEST(Interpretation, CheckExamples) {
  const auto kg = make_kg(4, 2, {{0, 0, 1}, {1, 1, 2}, {0, 0, 3}, {0, 0, 2}});
  const auto t = to_computation_tree(find_structure("2p").instantiate(
      std::vector<EntityId>{EntityId(0)}, std::vector<RelationId>{RelationId(0), RelationId(2)}));
  const auto m = build_matrix(kg, AdjacencyScorer{GraphSelector::kFull}, {});
  const auto cache = forward(t, m);
  const auto a = backward(t, cache, m, EntityId(2));
  EXPECT_EQ(a.value, 1.0);
  EXPECT_TRUE(oracle::check_interpretation(t, a.entities, kg));
  auto flipped = a.entities;
  flipped[1] = EntityId(3);  // 3 has no r1 edge to 2
  EXPECT_FALSE(oracle::check_interpretation(t, flipped, kg));
  // Negated edges must be absent.
  const auto n = to_computation_tree(find_structure("2in").instantiate(
      std::vector<EntityId>{EntityId(0), EntityId(1)}, std::vector<RelationId>{RelationId(0), RelationId(2)}));
  std::vector<EntityId> an(n.size());
  for (NodeId id = 0; id < n.size(); ++id)
    an[id] = n.node(id).kind == NodeKind::kConstant ? n.node(id).entity : EntityId(3);
  EXPECT_TRUE(oracle::check_interpretation(n, an, kg));
  for (NodeId id = 0; id < n.size(); ++id)
    if (n.node(id).kind != NodeKind::kConstant) an[id] = EntityId(2);
  EXPECT_TRUE(oracle::check_interpretation(n, an, kg) == false);
}

TEST(DenseReference, Examples) {
  const std::vector<double> dense{0, 0.9, 0.2, 0};
  EXPECT_EQ(oracle::dense_project({1, 0}, dense, 2), (std::vector<double>{0, 0.9}));
  const std::vector<double> d2{0, 1, 0, 0};
  EXPECT_EQ(oracle::dense_anti_project({1.0, 0.5}, d2, 2), (std::vector<double>{1.0, 0.5}));
}

TEST(RandomInstance, Deterministic) {
  const auto a = oracle::random_instance("inp", 5);
  const auto b = oracle::random_instance("inp", 5);
  EXPECT_TRUE(a.matrix == b.matrix);
  EXPECT_EQ(a.tree.shape(true), b.tree.shape(true));
  EXPECT_LE(a.matrix.num_entities(), 25u);
  for (std::uint32_t r = 0; r < a.matrix.num_relations(); ++r)
    for (const auto& e : a.matrix.relation(RelationId(r)).entries()) EXPECT_TRUE(e.value == 1.0 || e.value <= 1 - 1e-4);
}
