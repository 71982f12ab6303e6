#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "common.hpp"
#include "kg_store.hpp"
#include "neural_adjacency.hpp"
#include "query_model.hpp"
#include "query_tree.hpp"

// Brute-force reference evaluation. Nothing here calls into the solver
// kernels; matrices are read entry by entry.

namespace qto::oracle {

using VariableAssignment = std::map<std::string, EntityId>;

/// Atom values multiplied per disjunct, disjuncts joined by 1 - prod(1 - x).
double eval_dnf(const DnfQuery& q, const VariableAssignment& assignment, const NeuralAdjacency& m,
                const NegationScaling& scaling = {});

/// Recursive truth value of the tree for one entity per node. Constants take
/// their own entity; children of intersection/union nodes must carry their
/// parent's entity.
double eval_tree(const QueryTree& tree, const std::vector<EntityId>& assignment, const NeuralAdjacency& m,
                 const NegationScaling& scaling = {});

struct OracleResult {
  double max_value = 0.0;
  std::vector<std::vector<EntityId>> argmax_assignments;  // per-node entities, lexicographic order
  std::vector<double> per_answer_max;
};

inline constexpr std::uint64_t kDefaultBudget = 10'000'000;

/// Exhaustive search over one entity per binding group. Throws
/// Error(kBudgetExceeded) when |V|^groups exceeds the budget.
OracleResult brute_force_max(const QueryTree& tree, const NeuralAdjacency& m, const NegationScaling& scaling = {},
                             std::uint64_t budget = kDefaultBudget);

/// Boolean evaluation of the assigned tree on the full graph: positive
/// edges must exist, negated edges must be absent, unions need one branch.
bool check_interpretation(const QueryTree& tree, const std::vector<EntityId>& assignment, const KnowledgeGraph& kg);

/// Dense row-major copy of a relation matrix including the alpha scale.
std::vector<double> dense_matrix(const NeuralAdjacency& m, RelationId r, double alpha = 1.0);
std::vector<double> dense_project(const std::vector<double>& child, const std::vector<double>& dense, std::size_t n);
std::vector<double> dense_anti_project(const std::vector<double>& child, const std::vector<double>& dense,
                                       std::size_t n);

/// One randomly drawn certification instance.
struct Instance {
  KnowledgeGraph kg;
  NeuralAdjacency matrix;
  QueryTree tree;
  std::string structure;
};

struct InstanceOptions {
  std::size_t max_entities = 25;
  std::size_t max_relations = 4;  // forward relations
};

/// Random graph, matrix with values in {0, random(delta..1-delta), 1} and a
/// tree of the structure with uniformly drawn anchors and relations.
Instance random_instance(const std::string& structure, std::uint64_t seed, const InstanceOptions& opts = {});

struct CheckReport {
  std::size_t total = 0;
  std::size_t passed = 0;
  std::vector<std::string> failures;  // one line per failing instance
};

/// Optimality certification: forward maxima equal brute-force per-answer
/// maxima and the backward assignment re-evaluates to the forward value.
CheckReport certify_optimality(std::uint64_t seed, std::size_t num_instances, std::size_t max_entities,
                               std::uint64_t budget = kDefaultBudget, double tolerance = 1e-9);

}  // namespace qto::oracle
