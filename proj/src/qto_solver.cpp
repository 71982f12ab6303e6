#include "qto_solver.hpp"

#include <algorithm>

namespace qto {

TruthVector::TruthVector(std::vector<double> values) : values_(std::move(values)) {
  for (std::size_t e = 0; e < values_.size(); ++e)
    if (values_[e] != 0.0) support_.push_back(static_cast<std::uint32_t>(e));
}

TruthVector TruthVector::one_hot(std::size_t dim, EntityId e) {
  if (e.index() >= dim) fail(ErrorCode::kInvalidArgument, "one_hot: entity out of range");
  TruthVector t;
  t.values_.assign(dim, 0.0);
  t.values_[e.index()] = 1.0;
  t.support_ = {e.value};
  return t;
}

namespace {

std::size_t common_size(std::span<const TruthVector* const> children, const char* op) {
  if (children.empty()) fail(ErrorCode::kInvalidArgument, std::string(op) + ": no operands");
  const std::size_t n = children.front()->size();
  for (const auto* c : children)
    if (c->size() != n) fail(ErrorCode::kInvalidArgument, std::string(op) + ": truth vector length mismatch");
  return n;
}

std::vector<const TruthVector*> pointers(std::span<const TruthVector> children) {
  std::vector<const TruthVector*> out;
  for (const auto& c : children) out.push_back(&c);
  return out;
}

}  // namespace

TruthVector combine_intersection(std::span<const TruthVector* const> children) {
  const std::size_t n = common_size(children, "intersection");
  std::vector<double> out(n, 0.0);
  // Product is zero outside the first operand's support.
  for (std::uint32_t e : children.front()->support()) {
    double v = 1.0;
    for (const auto* c : children) v *= (*c)[e];
    out[e] = v;
  }
  return TruthVector(std::move(out));
}

TruthVector combine_union(std::span<const TruthVector* const> children) {
  const std::size_t n = common_size(children, "union");
  std::vector<double> miss(n, 1.0);
  for (const auto* c : children)
    for (std::uint32_t e : c->support()) miss[e] *= 1.0 - (*c)[e];
  for (auto& v : miss) v = 1.0 - v;
  return TruthVector(std::move(miss));
}

TruthVector combine_intersection(std::span<const TruthVector> children) {
  const auto p = pointers(children);
  return combine_intersection(std::span<const TruthVector* const>(p));
}

TruthVector combine_union(std::span<const TruthVector> children) {
  const auto p = pointers(children);
  return combine_union(std::span<const TruthVector* const>(p));
}

TruthVector project(const TruthVector& child, const RelationView& m) {
  if (child.size() != m.dim()) fail(ErrorCode::kInvalidArgument, "project: dimension mismatch");
  std::vector<double> out(child.size(), 0.0);
  for (std::uint32_t src : child.support()) {
    const double w = child[src];
    const auto cols = m.matrix->row_cols(src);
    const auto vals = m.matrix->row_values(src);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const double v = w * m.scale(vals[k]);
      if (v > out[cols[k]]) out[cols[k]] = v;
    }
  }
  return TruthVector(std::move(out));
}

TruthVector anti_project(const TruthVector& child, const RelationView& m) {
  const std::size_t n = child.size();
  if (n != m.dim()) fail(ErrorCode::kInvalidArgument, "anti_project: dimension mismatch");
  std::vector<std::uint32_t> by_value(child.support());
  std::stable_sort(by_value.begin(), by_value.end(), [&](std::uint32_t a, std::uint32_t b) { return child[a] > child[b]; });

  std::vector<double> out(n, 0.0);
  std::vector<char> in_column(n, 0);
  for (std::size_t e = 0; e < n; ++e) {
    const auto rows = m.matrix->col_rows(e);
    const auto vals = m.matrix->col_values(e);
    double best = 0.0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      in_column[rows[k]] = 1;
      const double v = child[rows[k]] * (1.0 - m.scale(vals[k]));
      if (v > best) best = v;
    }
    // Sources without an entry contribute child[e'] * 1; the first such one in
    // descending order is their maximum.
    for (std::uint32_t src : by_value) {
      if (in_column[src]) continue;
      best = std::max(best, child[src]);
      break;
    }
    for (std::uint32_t r : rows) in_column[r] = 0;
    out[e] = best;
  }
  return TruthVector(std::move(out));
}

namespace {

double edge_alpha(const QueryTree& tree, const TreeNode& node, const NegationScaling& scaling) {
  return scaling.alpha_for(tree.has_negation(), node.kind == NodeKind::kAntiProjection);
}

}  // namespace

ForwardCache forward(const QueryTree& tree, const NeuralAdjacency& m, const NegationScaling& scaling) {
  if (tree.empty()) fail(ErrorCode::kInvalidArgument, "forward: empty tree");
  if (scaling.alpha < 1.0) fail(ErrorCode::kInvalidArgument, "alpha must be >= 1");
  tree.check_ids(m.num_entities(), m.num_relations());
  const std::size_t n = m.num_entities();
  ForwardCache cache;
  cache.values.resize(tree.size());
  for (NodeId id : tree.post_order()) {
    const auto& node = tree.node(id);
    TruthVector& out = cache.values[id];
    switch (node.kind) {
      case NodeKind::kConstant:
        out = TruthVector::one_hot(n, node.entity);
        break;
      case NodeKind::kIntersection:
      case NodeKind::kUnion: {
        std::vector<const TruthVector*> kids;
        for (NodeId c : node.children) kids.push_back(&cache.values[c]);
        out = node.kind == NodeKind::kIntersection ? combine_intersection(kids) : combine_union(kids);
        break;
      }
      case NodeKind::kProjection:
      case NodeKind::kAntiProjection: {
        const RelationView view = m.view(node.relation, edge_alpha(tree, node, scaling));
        const auto& child = cache.values[node.children[0]];
        out = node.kind == NodeKind::kProjection ? project(child, view) : anti_project(child, view);
        break;
      }
    }
    if (id != QueryTree::root()) cache.max_support = std::max(cache.max_support, out.support().size());
  }
  return cache;
}

std::vector<std::pair<EntityId, double>> rank_answers(const TruthVector& root) {
  std::vector<std::pair<EntityId, double>> out;
  out.reserve(root.size());
  for (std::size_t e = 0; e < root.size(); ++e) out.emplace_back(EntityId(static_cast<std::uint32_t>(e)), root[e]);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

Assignment backward(const QueryTree& tree, const ForwardCache& cache, const NeuralAdjacency& m, EntityId target,
                    const NegationScaling& scaling) {
  if (cache.values.size() != tree.size()) fail(ErrorCode::kInvalidArgument, "backward: cache does not match tree");
  if (target.index() >= m.num_entities()) fail(ErrorCode::kInvalidArgument, "backward: target entity out of range");
  Assignment a;
  a.entities.assign(tree.size(), EntityId());
  a.entities[QueryTree::root()] = target;
  a.value = cache.root()[target.index()];

  // Pre-order ids: every parent is assigned before its children.
  for (NodeId id = 0; id < tree.size(); ++id) {
    const auto& node = tree.node(id);
    const EntityId t = a.entities[id];
    switch (node.kind) {
      case NodeKind::kConstant:
        a.entities[id] = node.entity;
        break;
      case NodeKind::kIntersection:
      case NodeKind::kUnion:
        for (NodeId c : node.children) a.entities[c] = t;
        break;
      case NodeKind::kProjection:
      case NodeKind::kAntiProjection: {
        const NodeId c = node.children[0];
        const auto& cn = tree.node(c);
        if (cn.kind == NodeKind::kConstant) break;
        const auto& child = cache.values[c];
        const RelationView view = m.view(node.relation, edge_alpha(tree, node, scaling));
        std::uint32_t best_id = 0;
        double best = 0.0;
        if (node.kind == NodeKind::kProjection) {
          const auto rows = view.matrix->col_rows(t.index());
          const auto vals = view.matrix->col_values(t.index());
          for (std::size_t k = 0; k < rows.size(); ++k) {
            const double v = child[rows[k]] * view.scale(vals[k]);
            if (v > best) {
              best = v;
              best_id = rows[k];
            }
          }
        } else {
          for (std::uint32_t src : child.support()) {
            const double v = child[src] * (1.0 - view.at(src, t.index()));
            if (v > best) {
              best = v;
              best_id = src;
            }
          }
        }
        a.entities[c] = EntityId(best_id);
        break;
      }
    }
  }
  return a;
}

std::size_t predict_cardinality(const TruthVector& root, double threshold) {
  return static_cast<std::size_t>(
      std::count_if(root.values().begin(), root.values().end(), [&](double v) { return v > threshold; }));
}

}  // namespace qto
