#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "common.hpp"
#include "kg_store.hpp"
#include "query_model.hpp"
#include "query_tree.hpp"

namespace qto {

/// Atom of a structure template. Relations and anchors are slot indices;
/// `anchor < 0` means the source is the variable `from_var`.
struct SlotAtom {
  int relation = 0;
  bool negated = false;
  int anchor = -1;
  std::string from_var;
  std::string to;
};

struct StructureTemplate {
  std::string name;
  int num_anchors = 0;
  int num_relations = 0;
  std::vector<std::vector<SlotAtom>> disjuncts;

  /// DNF with the given anchors and relations substituted into the slots.
  DnfQuery instantiate(std::span<const EntityId> anchors, std::span<const RelationId> relations) const;
  /// Computation tree of the template with slot indices standing in for ids
  /// (anchor slot k as entity k, relation slot k as relation 2k).
  QueryTree placeholder_tree() const;
};

/// Answer variable name used by every template.
inline constexpr const char* kAnswerVariable = "v?";

/// The 14 benchmark structures in report order: 1p 2p 3p 2i 3i pi ip 2u up
/// 2in 3in inp pin pni.
const std::vector<StructureTemplate>& standard_structures();
/// Longer chains 4p and 5p.
const std::vector<StructureTemplate>& extended_structures();
/// Throws Error(kInvalidArgument) for unknown names.
const StructureTemplate& find_structure(const std::string& name);
std::vector<std::string> parse_structure_list(const std::string& csv);

bool is_negation_structure(const std::string& name);
/// Structures averaged into avg_p (positive, standard set only).
bool is_epfo_structure(const std::string& name);
bool is_ood_structure(const std::string& name);
/// Structures with intermediate variables worth interpreting.
bool is_interpretable_structure(const std::string& name);

struct GeneratedQuery {
  std::string structure;
  DnfQuery query;
  QueryTree tree;
  std::vector<EntityId> easy;  // ascending
  std::vector<EntityId> hard;  // ascending, disjoint from easy, non-empty
};

enum class QuerySplit { kValid, kTest };
QuerySplit parse_query_split(const std::string& s);
const char* to_string(QuerySplit s);

/// Graph pair used for answers: easy from the lower graph, hard from the
/// upper graph minus easy.
GraphSelector lower_graph(QuerySplit s);
GraphSelector upper_graph(QuerySplit s);

struct GenerateOptions {
  std::vector<std::string> structures;
  std::size_t per_structure = 0;
  std::uint64_t seed = 0;
  QuerySplit split = QuerySplit::kTest;
  unsigned threads = 1;
};

struct GenerateResult {
  std::vector<GeneratedQuery> queries;  // grouped by structure, in request order
  std::vector<std::string> warnings;
};

/// Samples grounded queries (anchors walked backwards from the tail of a
/// held-out edge), rejecting duplicates and queries without hard answers.
/// Each structure gets n * 1000 attempts; shortfalls produce a warning.
GenerateResult generate_queries(const KnowledgeGraph& kg, const GenerateOptions& opts);

/// Recomputes easy/hard answers of a tree for the given split.
void compute_answers(const KnowledgeGraph& kg, QuerySplit split, const QueryTree& tree, std::vector<EntityId>& easy,
                     std::vector<EntityId>& hard);

nlohmann::json query_record_to_json(const GeneratedQuery& q, const KnowledgeGraph& kg);
/// Throws Error(kParse) on malformed records and Error(kInvalidArgument)
/// when the tree does not have the shape of the named structure.
GeneratedQuery query_record_from_json(const nlohmann::json& j, const KnowledgeGraph& kg);

void save_queries(const std::string& path, std::span<const GeneratedQuery> queries, const KnowledgeGraph& kg);
std::vector<GeneratedQuery> load_queries(const std::string& path, const KnowledgeGraph& kg);

}  // namespace qto
