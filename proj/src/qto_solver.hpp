#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "common.hpp"
#include "neural_adjacency.hpp"
#include "query_tree.hpp"

namespace qto {

/// Per-entity optimal truth values of one node, with the ascending list of
/// nonzero entries.
class TruthVector {
 public:
  TruthVector() = default;
  explicit TruthVector(std::vector<double> values);
  static TruthVector one_hot(std::size_t dim, EntityId e);

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t e) const { return values_[e]; }
  const std::vector<double>& values() const { return values_; }
  const std::vector<std::uint32_t>& support() const { return support_; }

 private:
  std::vector<double> values_;
  std::vector<std::uint32_t> support_;
};

TruthVector combine_intersection(std::span<const TruthVector* const> children);
TruthVector combine_union(std::span<const TruthVector* const> children);
TruthVector combine_intersection(std::span<const TruthVector> children);
TruthVector combine_union(std::span<const TruthVector> children);

/// out[e] = max_e' child[e'] * M[e', e], scanning rows of the child's support.
TruthVector project(const TruthVector& child, const RelationView& m);
/// out[e] = max_e' child[e'] * (1 - M[e', e]), exact.
TruthVector anti_project(const TruthVector& child, const RelationView& m);

struct ForwardCache {
  std::vector<TruthVector> values;  // indexed by node id
  std::size_t max_support = 0;      // largest intermediate support seen

  const TruthVector& root() const { return values.front(); }
};

/// Post-order evaluation of every node of the tree.
ForwardCache forward(const QueryTree& tree, const NeuralAdjacency& m, const NegationScaling& scaling = {});

/// Entities by value descending, ties by id ascending.
std::vector<std::pair<EntityId, double>> rank_answers(const TruthVector& root);

/// Entity per tree node realizing cache.root()[target]; constants carry their
/// own entity.
struct Assignment {
  std::vector<EntityId> entities;
  double value = 0.0;
};

Assignment backward(const QueryTree& tree, const ForwardCache& cache, const NeuralAdjacency& m, EntityId target,
                    const NegationScaling& scaling = {});

/// Number of entries strictly above the threshold.
std::size_t predict_cardinality(const TruthVector& root, double threshold);

}  // namespace qto
