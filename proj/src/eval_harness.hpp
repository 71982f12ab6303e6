#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "kg_store.hpp"
#include "neural_adjacency.hpp"
#include "qto_solver.hpp"
#include "structures.hpp"

namespace qto {

/// 1 + #(unfiltered e != target with value > value[target]) + ties / 2.
/// `filter_out` must be sorted; the target is never counted against itself.
double filtered_rank(std::span<const double> values, EntityId target, std::span<const EntityId> filter_out);

struct EvalOptions {
  NegationScaling scaling;
  bool interpretation = false;
  bool timing = false;
  unsigned threads = 1;
};

/// Percentages, averaged over the hard answers of a query and then over the
/// queries of the structure.
struct StructureMetrics {
  std::string structure;
  std::size_t queries = 0;
  std::size_t hard_answers = 0;
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
  // Easy-answer faithfulness diagnostics.
  std::size_t easy_answers = 0;
  double easy_exact_one = 100.0;  // easy answers whose value is exactly 1
  double easy_hits1 = 100.0;      // filtered Hits@1 over easy answers
  std::size_t max_support = 0;
  std::optional<double> ms_per_query;
};

/// Accuracy (%) of recovered assignments among hard answers ranked within
/// K, for K = 1, 3, 10 and all hard answers.
struct InterpretationMetrics {
  std::string structure;
  std::array<std::optional<double>, 4> accuracy;
  std::array<std::size_t, 4> counted{};
};

struct CardinalityResult {
  double threshold = 0.0;
  double valid_mape = 0.0;
  double test_mape = 0.0;
  std::vector<std::pair<std::string, double>> per_structure;  // test MAPE
};

struct Averages {
  std::optional<double> mrr, hits1, hits3, hits10;
};

struct EvalReport {
  std::vector<StructureMetrics> structures;  // report order
  Averages avg_p, avg_ood, avg_n;
  std::vector<InterpretationMetrics> interpretation;
  std::optional<CardinalityResult> cardinality;
  nlohmann::json metadata;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

EvalReport run_eval(const KnowledgeGraph& kg, const NeuralAdjacency& m, std::span<const GeneratedQuery> queries,
                    const EvalOptions& opts);

/// Threshold T in {0.1, ..., 0.9} minimizing validation MAPE (smallest T on
/// ties) and the test MAPE at that T. Truth is |easy u hard|.
CardinalityResult eval_cardinality(const NeuralAdjacency& m, std::span<const GeneratedQuery> valid,
                                   std::span<const GeneratedQuery> test, const EvalOptions& opts);

/// Throws Error(kInvalidArgument) "structure trivially interpretable" for
/// structures without intermediate variables.
std::vector<InterpretationMetrics> eval_interpretation(const KnowledgeGraph& kg, const NeuralAdjacency& m,
                                                       std::span<const GeneratedQuery> queries,
                                                       const EvalOptions& opts);

}  // namespace qto
