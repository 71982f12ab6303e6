#include "neural_adjacency.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "binary_io.hpp"
#include "parallel.hpp"
#include "random.hpp"

namespace qto {

// ---- SparseRelationMatrix ----------------------------------------------------

SparseRelationMatrix::SparseRelationMatrix(std::size_t dim, std::span<const MatrixEntry> entries) : dim_(dim) {
  row_offsets_.assign(dim + 1, 0);
  cols_.reserve(entries.size());
  values_.reserve(entries.size());
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const auto& e = entries[k];
    if (e.row >= dim || e.col >= dim) fail(ErrorCode::kFormat, "matrix entry out of range");
    if (!(e.value > 0.0 && e.value <= 1.0))
      fail(ErrorCode::kFormat, "matrix entry value " + std::to_string(e.value) + " outside (0, 1]");
    if (k > 0) {
      const auto& p = entries[k - 1];
      if (p.row > e.row || (p.row == e.row && p.col >= e.col))
        fail(ErrorCode::kFormat, "matrix entries not sorted by (row, col) or duplicated");
    }
    ++row_offsets_[e.row + 1];
    cols_.push_back(e.col);
    values_.push_back(e.value);
  }
  for (std::size_t i = 1; i <= dim; ++i) row_offsets_[i] += row_offsets_[i - 1];

  col_offsets_.assign(dim + 1, 0);
  for (auto c : cols_) ++col_offsets_[c + 1];
  for (std::size_t j = 1; j <= dim; ++j) col_offsets_[j] += col_offsets_[j - 1];
  col_rows_.resize(cols_.size());
  col_values_.resize(cols_.size());
  std::vector<std::uint32_t> cursor(col_offsets_.begin(), col_offsets_.end() - 1);
  // Row-major traversal keeps rows ascending within each column.
  for (std::size_t i = 0; i < dim; ++i)
    for (auto k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k) {
      const auto slot = cursor[cols_[k]]++;
      col_rows_[slot] = static_cast<std::uint32_t>(i);
      col_values_[slot] = values_[k];
    }
}

double SparseRelationMatrix::at(std::size_t i, std::size_t j) const {
  auto cols = row_cols(i);
  auto it = std::lower_bound(cols.begin(), cols.end(), j);
  if (it == cols.end() || *it != j) return 0.0;
  return values_[row_offsets_[i] + static_cast<std::size_t>(it - cols.begin())];
}

std::vector<MatrixEntry> SparseRelationMatrix::entries() const {
  std::vector<MatrixEntry> out;
  out.reserve(nnz());
  for (std::size_t i = 0; i < dim_; ++i)
    for (auto k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k)
      out.push_back({static_cast<std::uint32_t>(i), cols_[k], values_[k]});
  return out;
}

// ---- NeuralAdjacency ---------------------------------------------------------

NeuralAdjacency::NeuralAdjacency(std::size_t num_entities, double delta, double epsilon,
                                 std::vector<SparseRelationMatrix> matrices)
    : num_entities_(num_entities), delta_(delta), epsilon_(epsilon), matrices_(std::move(matrices)) {
  for (const auto& m : matrices_)
    if (m.dim() != num_entities_) fail(ErrorCode::kInvalidArgument, "relation matrix dimension mismatch");
}

std::size_t NeuralAdjacency::nnz() const {
  std::size_t n = 0;
  for (const auto& m : matrices_) n += m.nnz();
  return n;
}

const SparseRelationMatrix& NeuralAdjacency::relation(RelationId r) const {
  if (r.index() >= matrices_.size())
    fail(ErrorCode::kInvalidArgument, "relation id " + std::to_string(r.value) + " out of range");
  return matrices_[r.index()];
}

RelationView NeuralAdjacency::view(RelationId r, double alpha) const { return {&relation(r), alpha}; }

RelationView negation_view(const NeuralAdjacency& m, RelationId r, double alpha) {
  if (!(alpha >= 1.0)) fail(ErrorCode::kInvalidArgument, "alpha must be >= 1");
  return m.view(r, alpha);
}

AlphaScope parse_alpha_scope(const std::string& s) {
  if (s == "query") return AlphaScope::kQuery;
  if (s == "negated-atoms") return AlphaScope::kNegatedAtoms;
  fail(ErrorCode::kInvalidArgument, "unknown alpha scope '" + s + "' (expected query|negated-atoms)");
}

const char* to_string(AlphaScope s) { return s == AlphaScope::kQuery ? "query" : "negated-atoms"; }

namespace {
constexpr char kMagic[4] = {'Q', 'T', 'O', 'M'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void NeuralAdjacency::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write '" + path + "'");
  out.write(kMagic, 4);
  io::put_u32(out, kVersion);
  io::put_u64(out, num_entities_);
  io::put_u64(out, matrices_.size());
  io::put_f64(out, delta_);
  io::put_f64(out, epsilon_);
  for (const auto& m : matrices_) {
    io::put_u64(out, m.nnz());
    for (std::size_t i = 0; i < m.dim(); ++i) {
      auto cols = m.row_cols(i);
      auto vals = m.row_values(i);
      for (std::size_t k = 0; k < cols.size(); ++k) {
        io::put_u32(out, static_cast<std::uint32_t>(i));
        io::put_u32(out, cols[k]);
        io::put_f64(out, vals[k]);
      }
    }
  }
  if (!out) fail(ErrorCode::kIo, "write failed for '" + path + "'");
}

NeuralAdjacency NeuralAdjacency::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open '" + path + "'");
  io::Reader rd(in, path);
  char magic[4];
  rd.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) fail(ErrorCode::kFormat, path + ": not a QTOM file");
  const auto version = rd.u32("version");
  if (version != kVersion) fail(ErrorCode::kFormat, path + ": unsupported QTOM version " + std::to_string(version));
  const auto nv = rd.u64("entity count");
  const auto nr = rd.u64("relation count");
  if (nv > UINT32_MAX) fail(ErrorCode::kFormat, path + ": entity count exceeds 32-bit ids");
  const double delta = rd.f64("delta");
  const double epsilon = rd.f64("epsilon");
  std::vector<SparseRelationMatrix> matrices;
  std::vector<MatrixEntry> entries;
  for (std::uint64_t r = 0; r < nr; ++r) {
    const auto nnz = rd.u64("entry count");
    if (nnz > nv * nv) fail(ErrorCode::kFormat, path + ": entry count exceeds |V|^2 for relation " + std::to_string(r));
    entries.clear();
    for (std::uint64_t k = 0; k < nnz; ++k) {
      MatrixEntry e;
      e.row = rd.u32("matrix entries");
      e.col = rd.u32("matrix entries");
      e.value = rd.f64("matrix entries");
      entries.push_back(e);
    }
    try {
      matrices.emplace_back(static_cast<std::size_t>(nv), entries);
    } catch (const Error& e) {
      fail(ErrorCode::kFormat, path + ": relation " + std::to_string(r) + ": " + e.what());
    }
  }
  if (!rd.at_end()) fail(ErrorCode::kFormat, path + ": trailing bytes after QTOM body");
  return NeuralAdjacency(static_cast<std::size_t>(nv), delta, epsilon, std::move(matrices));
}

// ---- calibration -------------------------------------------------------------

std::vector<double> calibrate_row(std::span<const double> scores, std::size_t n_tail) {
  if (n_tail < 1) fail(ErrorCode::kInvalidArgument, "calibrate_row: n_tail must be >= 1");
  std::vector<double> out(scores.size());
  if (scores.empty()) return out;
  double max_score = scores[0];
  for (double s : scores) {
    if (!std::isfinite(s)) fail(ErrorCode::kInvalidArgument, "calibrate_row: non-finite score");
    max_score = std::max(max_score, s);
  }
  double z = 0.0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    out[j] = std::exp(scores[j] - max_score);
    z += out[j];
  }
  const double scale = static_cast<double>(n_tail) / z;
  for (auto& v : out) v *= scale;
  return out;
}

double round_faithful(double value, bool edge_in_train, double delta) {
  if (edge_in_train) return 1.0;
  return std::min(value, 1.0 - delta);
}

// ---- score sources -----------------------------------------------------------

namespace {

void embedding_row(const EmbeddingScorer& src, const KnowledgeGraph& kg, RelationId r, EntityId head,
                   std::span<double> out) {
  const auto& t = *src.table;
  const bool forward_only = 2 * t.num_relations() == kg.num_relations() && t.num_relations() != kg.num_relations();
  const std::size_t d = t.dim();
  std::vector<EmbeddingTable::Complex> w(d);
  const auto h = t.entity(head.index());
  if (!forward_only || !r.is_inverse()) {
    // sum_k Re(q_k conj(t_k)), q = r * h
    const auto rel = t.relation(forward_only ? r.index() / 2 : r.index());
    for (std::size_t k = 0; k < d; ++k) w[k] = rel[k] * h[k];
    for (std::size_t e = 0; e < out.size(); ++e) {
      const auto tail = t.entity(e);
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += w[k].real() * tail[k].real() + w[k].imag() * tail[k].imag();
      out[e] = s;
    }
  } else {
    // Inverse via swap: sum_k Re(t_k w_k), w = r * conj(h)
    const auto rel = t.relation(r.index() / 2);
    for (std::size_t k = 0; k < d; ++k) w[k] = rel[k] * std::conj(h[k]);
    for (std::size_t e = 0; e < out.size(); ++e) {
      const auto tail = t.entity(e);
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += tail[k].real() * w[k].real() - tail[k].imag() * w[k].imag();
      out[e] = s;
    }
  }
}

void check_scorer(const ScoreSource& src, const KnowledgeGraph& kg) {
  if (const auto* emb = std::get_if<EmbeddingScorer>(&src)) {
    if (!emb->table) fail(ErrorCode::kInvalidArgument, "embedding scorer without a table");
    const auto& t = *emb->table;
    if (t.num_entities() != kg.num_entities())
      fail(ErrorCode::kInvalidArgument, "embedding entity count " + std::to_string(t.num_entities()) +
                                            " does not match graph entity count " +
                                            std::to_string(kg.num_entities()));
    if (t.num_relations() != kg.num_relations() && 2 * t.num_relations() != kg.num_relations())
      fail(ErrorCode::kInvalidArgument, "embedding relation count " + std::to_string(t.num_relations()) +
                                            " matches neither " + std::to_string(kg.num_relations()) +
                                            " relations nor their forward half");
  }
}

}  // namespace

void score_row(const ScoreSource& src, const KnowledgeGraph& kg, RelationId r, EntityId head, std::span<double> out) {
  if (out.size() != kg.num_entities()) fail(ErrorCode::kInvalidArgument, "score_row: output size mismatch");
  if (head.index() >= kg.num_entities() || r.index() >= kg.num_relations())
    fail(ErrorCode::kInvalidArgument, "score_row: id out of range");
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, EmbeddingScorer>) {
          check_scorer(src, kg);
          embedding_row(s, kg, r, head, out);
        } else if constexpr (std::is_same_v<T, NoisyOracleScorer>) {
          Rng rng(derive_seed(s.seed, r.value, head.value));
          for (auto& v : out) v = s.noise_level * std::clamp(standard_normal(rng), -6.0, 6.0);
          for (EntityId t : kg.graph(GraphSelector::kFull).tails(head, r)) out[t.index()] = s.edge_score;
        } else {
          fail(ErrorCode::kInvalidArgument, "adjacency scorer has no real-valued scores");
        }
      },
      src);
}

GraphSelector faithful_graph(const ScoreSource& src) {
  if (const auto* a = std::get_if<AdjacencyScorer>(&src)) return a->graph;
  return GraphSelector::kTrain;
}

NeuralAdjacency build_matrix(const KnowledgeGraph& kg, const ScoreSource& src, const BuildOptions& opts,
                             BuildStats* stats) {
  if (!(opts.epsilon >= 0.0 && opts.epsilon < 1.0)) fail(ErrorCode::kInvalidArgument, "epsilon must lie in [0, 1)");
  if (!(opts.delta > 0.0 && opts.delta < 0.5)) fail(ErrorCode::kInvalidArgument, "delta must lie in (0, 0.5)");
  check_scorer(src, kg);
  const auto started = std::chrono::steady_clock::now();

  const std::size_t n = kg.num_entities();
  const std::size_t num_rel = kg.num_relations();
  const auto& pinned = kg.graph(faithful_graph(src));
  const bool degenerate = std::holds_alternative<AdjacencyScorer>(src);
  std::vector<SparseRelationMatrix> matrices(num_rel);

  parallel_for(num_rel, opts.threads, [&](std::size_t ri) {
    const RelationId r(static_cast<std::uint32_t>(ri));
    std::vector<MatrixEntry> entries;
    std::vector<double> scores(n);
    for (std::size_t hi = 0; hi < n; ++hi) {
      const EntityId head(static_cast<std::uint32_t>(hi));
      const auto edges = pinned.tails(head, r);
      if (degenerate) {
        for (EntityId t : edges) entries.push_back({head.value, t.value, 1.0});
        continue;
      }
      try {
        score_row(src, kg, r, head, scores);
        const auto calibrated = calibrate_row(scores, kg.tail_count(head, r));
        auto edge = edges.begin();
        for (std::size_t ti = 0; ti < n; ++ti) {
          while (edge != edges.end() && edge->index() < ti) ++edge;
          const bool in_train = edge != edges.end() && edge->index() == ti;
          const double v = round_faithful(calibrated[ti], in_train, opts.delta);
          if (in_train || (v > 0.0 && v >= opts.epsilon))
            entries.push_back({head.value, static_cast<std::uint32_t>(ti), v});
        }
      } catch (const Error& e) {
        fail(e.code(), "building row (relation " + kg.relation_label(r) + ", head " + kg.entity_label(head) +
                           "): " + e.what());
      }
    }
    matrices[ri] = SparseRelationMatrix(n, entries);
  });

  NeuralAdjacency m(n, opts.delta, opts.epsilon, std::move(matrices));
  if (stats) {
    stats->nnz = m.nnz();
    const double total = static_cast<double>(num_rel) * static_cast<double>(n) * static_cast<double>(n);
    stats->density = total > 0 ? static_cast<double>(stats->nnz) / total : 0.0;
    stats->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  }
  return m;
}

}  // namespace qto
