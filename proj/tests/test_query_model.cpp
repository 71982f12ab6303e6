#include <algorithm>
#include <functional>
#include <set>

#include "oracle.hpp"
#include "qto_solver.hpp"
#include "structures.hpp"
#include "shapes.hpp"
#include "test_util.hpp"

using namespace qto;
using namespace qto::testing;

namespace {

KnowledgeGraph labelled_kg() { return make_kg(8, 3, {{0, 0, 1}, {1, 1, 2}, {3, 2, 4}}); }

Error parse_error(const std::string& text, const KnowledgeGraph& kg) {
  try {
    to_computation_tree(parse_query(text, kg));
  } catch (const Error& e) {
    return e;
  }
  return Error(ErrorCode::kInternal, "no error");
}

}  // namespace

TEST(QueryParse, MinimalQuery) {
  const auto kg = labelled_kg();
  const auto q = parse_query(R"({"answer":"v","disjuncts":[[{"rel":"r0","from":{"const":"e3"},"to":"v"}]]})", kg);
  ASSERT_EQ(q.disjuncts.size(), 1u);
  ASSERT_EQ(q.disjuncts[0].size(), 1u);
  EXPECT_EQ(q.disjuncts[0][0].from, Term::constant(EntityId(3)));
  EXPECT_EQ(q.disjuncts[0][0].to, "v");
  EXPECT_EQ(to_computation_tree(q).shape(), "p(c)");
  // Object form of the target is accepted too.
  const auto q2 = parse_query(R"({"answer":"v","disjuncts":[[{"rel":"r0","from":{"const":"e3"},"to":{"var":"v"}}]]})", kg);
  EXPECT_EQ(q, q2);
}

TEST(QueryParse, Errors) {
  const auto kg = labelled_kg();
  auto code = [&](const std::string& s) { return parse_error(s, kg).code(); };
  EXPECT_EQ(code(R"({"answer":"v","disjuncts":[[{"rel":"r0","from":{"const":"e3"},"to":{"const":"e1"}}]]})"),
            ErrorCode::kParse);
  EXPECT_EQ(code(R"({"answer":"v","disjuncts":[[{"rel":"nope","from":{"const":"e3"},"to":"v"}]]})"),
            ErrorCode::kParse);
  EXPECT_EQ(code(R"({"answer":"v","disjuncts":[[{"rel":"r0","from":{"const":"zz"},"to":"v"}]]})"),
            ErrorCode::kParse);
  EXPECT_EQ(code(R"({"answer":"v","disjuncts":[]})"), ErrorCode::kParse);
  EXPECT_EQ(code(R"({"answer":"w","disjuncts":[[{"rel":"r0","from":{"const":"e3"},"to":"v"}]]})"),
            ErrorCode::kParse);
  EXPECT_EQ(code(R"({"disjuncts":[[{"rel":"r0","from":{"const":"e3"},"to":"v"}]]})"), ErrorCode::kParse);
  EXPECT_EQ(code(R"({"answer":"v","disjuncts":[[{"rel":"r0","neg":1,"from":{"const":"e3"},"to":"v"}]]})"),
            ErrorCode::kParse);
  EXPECT_EQ(code("{not json"), ErrorCode::kParse);
  EXPECT_EQ(code(R"({"answer":"v","disjuncts":[[{"rel":"r0","from":{"var":"v"},"to":"v"}]]})"),
            ErrorCode::kUnsupportedQuery);
}

TEST(QueryConvert, ChainHasNoMergeNodes) {
  const auto kg = labelled_kg();
  const auto t = to_computation_tree(parse_query(
      R"({"answer":"v","disjuncts":[[{"rel":"r0","from":{"const":"e0"},"to":"m"},{"rel":"r1","from":{"var":"m"},"to":"v"}]]})",
      kg));
  EXPECT_EQ(t.shape(true), "p[r2](p[r0](e0))");
  for (const auto& n : t.nodes())
    EXPECT_TRUE(n.kind != NodeKind::kIntersection && n.kind != NodeKind::kUnion);
}

TEST(QueryConvert, InvertsAtomsPointingAwayFromAnswer) {
  const auto kg = labelled_kg();
  // r1(v, m) with m anchored: m is a child of v through r1 inverted.
  const auto t = to_computation_tree(parse_query(
      R"({"answer":"v","disjuncts":[[{"rel":"r0","from":{"const":"e0"},"to":"m"},{"rel":"r1","from":{"var":"v"},"to":"m"}]]})",
      kg));
  EXPECT_EQ(t.shape(true), "p[r3](p[r0](e0))");
}

TEST(QueryConvert, CyclicAndDisconnectedAreUnsupported) {
  const auto kg = labelled_kg();
  const auto cyc = parse_error(
      R"({"answer":"v","disjuncts":[[{"rel":"r0","from":{"const":"e0"},"to":"a"},{"rel":"r1","from":{"var":"a"},"to":"b"},
          {"rel":"r1","from":{"var":"b"},"to":"v"},{"rel":"r2","from":{"var":"a"},"to":"v"}]]})",
      kg);
  EXPECT_EQ(cyc.code(), ErrorCode::kUnsupportedQuery);
  EXPECT_NE(std::string(cyc.what()).find("cyclic"), std::string::npos);
  const auto dis = parse_error(
      R"({"answer":"v","disjuncts":[[{"rel":"r0","from":{"const":"e0"},"to":"v"},{"rel":"r1","from":{"const":"e1"},"to":"w"}]]})",
      kg);
  EXPECT_EQ(dis.code(), ErrorCode::kUnsupportedQuery);
}

TEST(QueryConvert, AllTemplatesMatchHandCodedTrees) {
  for (const auto* list : {&standard_structures(), &extended_structures()})
    for (const auto& t : *list) {
      const auto got = t.placeholder_tree();
      const auto want = expected_tree(t.name);
      EXPECT_EQ(canonical(got, true), canonical(want, true)) << t.name;
      EXPECT_EQ(got.has_negation(), is_negation_structure(t.name)) << t.name;
    }
}

TEST(QueryConvert, MixedUnionAndIntersection) {
  // Two disjuncts sharing the final relation r4(v1, v?): the first constrains
  // v1 by an intersection, the second by a single projection.
  const auto kg = make_kg(4, 5, {});
  const auto q = parse_query(R"({"answer":"v?","disjuncts":[
      [{"rel":"r1","from":{"const":"e1"},"to":"v1"},{"rel":"r2","from":{"const":"e2"},"to":"v1"},{"rel":"r4","from":{"var":"v1"},"to":"v?"}],
      [{"rel":"r3","from":{"const":"e3"},"to":"v1"},{"rel":"r4","from":{"var":"v1"},"to":"v?"}]]})",
                             kg);
  const auto t = to_computation_tree(q);
  EXPECT_EQ(canonical(t, true), "p[r8](u(i(p[r2](e1),p[r4](e2)),p[r6](e3)))");
}

TEST(QueryConvert, PrizeWinnerBirthplace) {
  // Where was the physicist who won a prize born: prize -won_by-> v1,
  // physicist -has_member-> v1, v1 -born_in-> v?.
  KnowledgeGraphLoader loader;
  auto add = [&](const char* h, const char* r, const char* t) { loader.add_triple(h, r, t, Split::kTrain); };
  add("NobelPrize1921", "won_by", "Einstein");
  add("NobelPrize1921", "won_by", "Anatole");  // a laureate who is not a physicist
  add("Physicist", "has_member", "Einstein");
  add("Physicist", "has_member", "Bohr");
  add("Einstein", "born_in", "Ulm");
  add("Anatole", "born_in", "Paris");
  add("Bohr", "born_in", "Copenhagen");
  const auto kg = std::move(loader).build();
  const auto tree = to_computation_tree(parse_query(R"({"answer":"city","disjuncts":[[
      {"rel":"won_by","from":{"const":"NobelPrize1921"},"to":"v1"},
      {"rel":"has_member","from":{"const":"Physicist"},"to":"v1"},
      {"rel":"born_in","from":{"var":"v1"},"to":"city"}]]})",
                                                    kg));
  EXPECT_EQ(tree.shape(), "p(i(p(c),p(c)))");
  const auto m = build_matrix(kg, AdjacencyScorer{GraphSelector::kFull}, {});
  const auto cache = forward(tree, m);
  const auto ulm = *kg.find_entity("Ulm");
  EXPECT_EQ(rank_answers(cache.root()).front().first, ulm);
  EXPECT_EQ(cache.root()[kg.find_entity("Paris")->index()], 0.0);
  const auto a = backward(tree, cache, m, ulm);
  EXPECT_EQ(a.entities[1], *kg.find_entity("Einstein"));
  EXPECT_TRUE(oracle::check_interpretation(tree, a.entities, kg));
}

TEST(QueryConvert, MergedUnionNeedsSharedSubpath) {
  const auto kg = make_kg(4, 3, {});
  // Two disjuncts ending in different relations: plain union at the root.
  const auto ok = to_computation_tree(parse_query(R"({"answer":"v","disjuncts":[
      [{"rel":"r0","from":{"const":"e0"},"to":"m"},{"rel":"r1","from":{"var":"m"},"to":"v"}],
      [{"rel":"r2","from":{"const":"e1"},"to":"v"}]]})",
                                                  kg));
  EXPECT_EQ(canonical(ok, false), "u(p(c),p(p(c)))");
}

TEST(QueryJson, ParseSerializeIdempotent) {
  const auto kg = labelled_kg();
  Rng rng(1);
  for (const auto* list : {&standard_structures(), &extended_structures()})
    for (const auto& t : *list) {
      std::vector<EntityId> anchors;
      std::vector<RelationId> rels;
      for (int i = 0; i < t.num_anchors; ++i) anchors.emplace_back(uniform_index(rng, kg.num_entities()));
      for (int i = 0; i < t.num_relations; ++i) rels.emplace_back(uniform_index(rng, kg.num_relations()));
      const auto q = t.instantiate(anchors, rels);
      const auto s1 = serialize_query(q, kg);
      const auto q2 = parse_query(s1, kg);
      EXPECT_EQ(q2, q) << t.name;
      EXPECT_EQ(serialize_query(q2, kg), s1) << t.name;
      const auto tree = to_computation_tree(q);
      const auto tj = tree_to_json(tree, kg);
      EXPECT_EQ(tree_from_json(tj, kg).shape(true), tree.shape(true)) << t.name;
      EXPECT_EQ(tree_to_json(tree_from_json(tj, kg), kg).dump(), tj.dump());
    }
}

TEST(QueryTree, Invariants) {
  for (const auto* list : {&standard_structures(), &extended_structures()})
    for (const auto& t : *list) {
      const auto tree = t.placeholder_tree();
      EXPECT_EQ(tree.answer_variable(), kAnswerVariable);
      for (NodeId id = 0; id < tree.size(); ++id) {
        const auto& n = tree.node(id);
        for (NodeId c : n.children) EXPECT_GT(c, id);
        switch (n.kind) {
          case NodeKind::kConstant: EXPECT_TRUE(n.children.empty()); break;
          case NodeKind::kIntersection:
          case NodeKind::kUnion: EXPECT_GE(n.children.size(), 2u); break;
          default: EXPECT_EQ(n.children.size(), 1u);
        }
      }
      const auto order = tree.post_order();
      EXPECT_EQ(order.size(), tree.size());
      EXPECT_EQ(order.back(), 0u);
      const auto groups = tree.binding_groups();
      for (NodeId id = 0; id < tree.size(); ++id) {
        const auto& n = tree.node(id);
        if (n.kind == NodeKind::kIntersection || n.kind == NodeKind::kUnion)
          for (NodeId c : n.children) EXPECT_EQ(groups[c], groups[id]);
      }
    }
}

TEST(Structures, Lists) {
  EXPECT_EQ(parse_structure_list("all").size(), 14u);
  EXPECT_EQ(parse_structure_list("1p, 2p,1p,pni"), (std::vector<std::string>{"1p", "2p", "pni"}));
  EXPECT_THROW(parse_structure_list("7z"), Error);
  EXPECT_THROW(find_structure("nope"), Error);
}

namespace {

KnowledgeGraph generator_graph() {
  Rng rng(99);
  return random_kg(rng, 40, 3, 0.05, 0.25);
}

}  // namespace

TEST(Generator, DeterministicAcrossRunsAndThreads) {
  const auto kg = generator_graph();
  GenerateOptions o{parse_structure_list("1p,2p,pni,up"), 10, 7, QuerySplit::kTest, 1};
  const auto a = generate_queries(kg, o);
  o.threads = 4;
  const auto b = generate_queries(kg, o);
  ASSERT_EQ(a.queries.size(), b.queries.size());
  for (std::size_t i = 0; i < a.queries.size(); ++i)
    EXPECT_EQ(query_record_to_json(a.queries[i], kg).dump(), query_record_to_json(b.queries[i], kg).dump());
  o.seed = 8;
  const auto c = generate_queries(kg, o);
  bool differ = c.queries.size() != a.queries.size();
  for (std::size_t i = 0; !differ && i < a.queries.size(); ++i) differ = !(a.queries[i].tree == c.queries[i].tree);
  EXPECT_TRUE(differ);
}

TEST(Generator, AnswerInvariants) {
  const auto kg = generator_graph();
  for (auto split : {QuerySplit::kValid, QuerySplit::kTest}) {
    const auto res = generate_queries(kg, {parse_structure_list("all"), 8, 3, split, 2});
    std::set<std::string> seen;
    for (const auto& q : res.queries) {
      EXPECT_FALSE(q.hard.empty());
      std::vector<EntityId> inter;
      std::set_intersection(q.easy.begin(), q.easy.end(), q.hard.begin(), q.hard.end(), std::back_inserter(inter));
      EXPECT_TRUE(inter.empty());
      const auto lower = kg.traverse_answers(lower_graph(split), q.tree);
      const auto upper = kg.traverse_answers(upper_graph(split), q.tree);
      EXPECT_EQ(q.easy, lower);
      std::vector<EntityId> hard;
      std::set_difference(upper.begin(), upper.end(), lower.begin(), lower.end(), std::back_inserter(hard));
      EXPECT_EQ(q.hard, hard);
      EXPECT_EQ(canonical(q.tree, false), canonical(find_structure(q.structure).placeholder_tree(), false));
      EXPECT_TRUE(seen.insert(q.structure + q.tree.shape(true)).second) << "duplicate query";
    }
  }
}

TEST(Generator, AllTrainGraphYieldsNothing) {
  Rng rng(5);
  const auto kg = random_kg(rng, 20, 2, 0.1, 0.0);
  const auto res = generate_queries(kg, {{"1p"}, 3, 1, QuerySplit::kTest, 1});
  EXPECT_TRUE(res.queries.empty());
  EXPECT_FALSE(res.warnings.empty());
}

TEST(Generator, RecordsRoundTripThroughFiles) {
  const auto kg = generator_graph();
  const auto res = generate_queries(kg, {parse_structure_list("2in,ip,2u"), 5, 2, QuerySplit::kValid, 1});
  const auto dir = temp_dir();
  save_queries((dir / "q.jsonl").string(), res.queries, kg);
  const auto back = load_queries((dir / "q.jsonl").string(), kg);
  ASSERT_EQ(back.size(), res.queries.size());
  save_queries((dir / "r.jsonl").string(), back, kg);
  EXPECT_EQ(read_file(dir / "q.jsonl"), read_file(dir / "r.jsonl"));

  auto j = query_record_to_json(res.queries.front(), kg);
  j["structure"] = "3p";
  EXPECT_THROW(query_record_from_json(j, kg), Error);
  write_file(dir / "bad.jsonl", "{\"structure\":\n");
  EXPECT_THROW(load_queries((dir / "bad.jsonl").string(), kg), Error);
}
