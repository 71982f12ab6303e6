#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "common.hpp"
#include "embeddings.hpp"
#include "kg_store.hpp"

namespace qto {

struct MatrixEntry {
  std::uint32_t row = 0;
  std::uint32_t col = 0;
  double value = 0.0;

  friend bool operator==(const MatrixEntry&, const MatrixEntry&) = default;
};

/// One relation's |V| x |V| probability matrix, held as CSR for row scans
/// and a mirrored CSC for column scans. Stored values lie in (0, 1].
class SparseRelationMatrix {
 public:
  SparseRelationMatrix() = default;
  /// Entries must be sorted by (row, col) without duplicates; throws
  /// Error(kFormat) otherwise.
  SparseRelationMatrix(std::size_t dim, std::span<const MatrixEntry> entries);

  std::size_t dim() const { return dim_; }
  std::size_t nnz() const { return cols_.size(); }

  std::span<const std::uint32_t> row_cols(std::size_t i) const {
    return {cols_.data() + row_offsets_[i], cols_.data() + row_offsets_[i + 1]};
  }
  std::span<const double> row_values(std::size_t i) const {
    return {values_.data() + row_offsets_[i], values_.data() + row_offsets_[i + 1]};
  }
  std::span<const std::uint32_t> col_rows(std::size_t j) const {
    return {col_rows_.data() + col_offsets_[j], col_rows_.data() + col_offsets_[j + 1]};
  }
  std::span<const double> col_values(std::size_t j) const {
    return {col_values_.data() + col_offsets_[j], col_values_.data() + col_offsets_[j + 1]};
  }

  /// Point lookup; 0 for absent entries.
  double at(std::size_t i, std::size_t j) const;
  std::vector<MatrixEntry> entries() const;

  friend bool operator==(const SparseRelationMatrix& a, const SparseRelationMatrix& b) {
    return a.dim_ == b.dim_ && a.row_offsets_ == b.row_offsets_ && a.cols_ == b.cols_ && a.values_ == b.values_;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<std::uint32_t> row_offsets_{0};
  std::vector<std::uint32_t> cols_;
  std::vector<double> values_;
  std::vector<std::uint32_t> col_offsets_{0};
  std::vector<std::uint32_t> col_rows_;
  std::vector<double> col_values_;
};

/// Read-only relation matrix with the negation scale applied on access:
/// value = min(1, alpha * stored).
struct RelationView {
  const SparseRelationMatrix* matrix = nullptr;
  double alpha = 1.0;

  double scale(double v) const { return alpha == 1.0 ? v : std::min(1.0, alpha * v); }
  double at(std::size_t i, std::size_t j) const { return scale(matrix->at(i, j)); }
  std::size_t dim() const { return matrix->dim(); }
};

/// Which atoms of a query containing a negation see the alpha-scaled matrix.
enum class AlphaScope { kQuery, kNegatedAtoms };

AlphaScope parse_alpha_scope(const std::string& s);
const char* to_string(AlphaScope s);

struct NegationScaling {
  double alpha = 1.0;
  AlphaScope scope = AlphaScope::kQuery;

  /// Scale for one relational edge of a query.
  double alpha_for(bool query_has_negation, bool edge_is_negated) const {
    if (!query_has_negation) return 1.0;
    if (scope == AlphaScope::kNegatedAtoms && !edge_is_negated) return 1.0;
    return alpha;
  }
};

/// Per-relation calibrated probability matrices M_r with their build knobs.
class NeuralAdjacency {
 public:
  static constexpr double kDefaultDelta = 1e-4;

  NeuralAdjacency() = default;
  NeuralAdjacency(std::size_t num_entities, double delta, double epsilon, std::vector<SparseRelationMatrix> matrices);

  std::size_t num_entities() const { return num_entities_; }
  std::size_t num_relations() const { return matrices_.size(); }
  double delta() const { return delta_; }
  double epsilon() const { return epsilon_; }
  std::size_t nnz() const;

  const SparseRelationMatrix& relation(RelationId r) const;
  RelationView view(RelationId r, double alpha = 1.0) const;

  /// QTOM binary format (little-endian).
  void save(const std::string& path) const;
  static NeuralAdjacency load(const std::string& path);

  friend bool operator==(const NeuralAdjacency&, const NeuralAdjacency&) = default;

 private:
  std::size_t num_entities_ = 0;
  double delta_ = kDefaultDelta;
  double epsilon_ = 0.0;
  std::vector<SparseRelationMatrix> matrices_;
};

/// alpha-scaled view used for every relational edge of a negation query.
RelationView negation_view(const NeuralAdjacency& m, RelationId r, double alpha);

// ---- score sources -------------------------------------------------------

/// ComplEx link scorer. When the table carries only forward relations, an
/// inverse relation scores its forward relation with head and tail swapped.
struct EmbeddingScorer {
  std::shared_ptr<const EmbeddingTable> table;
};

/// Degenerate source: M_r is the 0/1 adjacency of the selected graph.
struct AdjacencyScorer {
  GraphSelector graph = GraphSelector::kTrain;
};

/// Test source: `edge_score` for full-graph edges, otherwise
/// noise_level * N(0, 1) clipped to [-6, 6], drawn per (relation, head) row
/// from `seed`.
struct NoisyOracleScorer {
  double noise_level = 0.5;
  std::uint64_t seed = 0;
  double edge_score = 8.0;
};

using ScoreSource = std::variant<EmbeddingScorer, AdjacencyScorer, NoisyOracleScorer>;

/// Raw link scores f_r(head, t) for every tail t. Not defined for
/// AdjacencyScorer (throws Error(kInvalidArgument)).
void score_row(const ScoreSource& src, const KnowledgeGraph& kg, RelationId r, EntityId head, std::span<double> out);

/// softmax(scores) * n_tail; entries may exceed 1.
std::vector<double> calibrate_row(std::span<const double> scores, std::size_t n_tail);

/// 1 for training edges, min(value, 1 - delta) otherwise.
double round_faithful(double value, bool edge_in_train, double delta);

struct BuildOptions {
  double epsilon = 0.0;
  double delta = NeuralAdjacency::kDefaultDelta;
  unsigned threads = 1;
};

struct BuildStats {
  std::size_t nnz = 0;
  double density = 0.0;  // nnz / (|R| |V|^2)
  double seconds = 0.0;
};

/// Graph whose edges a source pins to value 1: the training graph for
/// learned/noisy scorers, the selected graph for AdjacencyScorer.
GraphSelector faithful_graph(const ScoreSource& src);

NeuralAdjacency build_matrix(const KnowledgeGraph& kg, const ScoreSource& src, const BuildOptions& opts,
                             BuildStats* stats = nullptr);

}  // namespace qto
