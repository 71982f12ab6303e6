#include "kg_store.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace qto {

std::optional<std::uint32_t> Vocabulary::find(const std::string& label) const {
  auto it = index_.find(label);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::uint32_t Vocabulary::add(const std::string& label) {
  auto [it, inserted] = index_.try_emplace(label, static_cast<std::uint32_t>(labels_.size()));
  if (inserted) labels_.push_back(label);
  return it->second;
}

Vocabulary Vocabulary::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open vocabulary file '" + path + "'");
  Vocabulary v;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) fail(ErrorCode::kParse, path + ":" + std::to_string(lineno) + ": empty vocabulary label");
    if (v.find(line)) fail(ErrorCode::kParse, path + ":" + std::to_string(lineno) + ": duplicate label '" + line + "'");
    v.add(line);
  }
  return v;
}

AdjacencyIndex::AdjacencyIndex(std::size_t num_entities, std::size_t num_relations, std::span<const Triple> triples)
    : num_entities_(num_entities), num_relations_(num_relations) {
  offsets_.assign(num_entities * num_relations + 1, 0);
  for (const auto& t : triples) ++offsets_[t.relation.index() * num_entities + t.head.index() + 1];
  for (std::size_t i = 1; i < offsets_.size(); ++i) offsets_[i] += offsets_[i - 1];
  tails_.resize(triples.size());
  std::vector<std::uint32_t> cursor(offsets_.begin(), offsets_.end() - 1);
  for (const auto& t : triples) tails_[cursor[t.relation.index() * num_entities + t.head.index()]++] = t.tail;
  for (std::size_t k = 0; k + 1 < offsets_.size(); ++k)
    std::sort(tails_.begin() + offsets_[k], tails_.begin() + offsets_[k + 1]);
}

std::span<const EntityId> AdjacencyIndex::tails(EntityId head, RelationId r) const {
  if (head.index() >= num_entities_ || r.index() >= num_relations_) return {};
  const std::size_t key = r.index() * num_entities_ + head.index();
  return {tails_.data() + offsets_[key], tails_.data() + offsets_[key + 1]};
}

bool AdjacencyIndex::contains(EntityId head, RelationId r, EntityId tail) const {
  auto ts = tails(head, r);
  return std::binary_search(ts.begin(), ts.end(), tail);
}

std::string KnowledgeGraph::relation_label(RelationId r) const {
  const auto& base = base_relations_.label(r.value >> 1);
  return r.is_inverse() ? base + kInverseSuffix : base;
}

std::optional<EntityId> KnowledgeGraph::find_entity(const std::string& label) const {
  if (auto id = entities_.find(label)) return EntityId(*id);
  return std::nullopt;
}

std::optional<RelationId> KnowledgeGraph::find_relation(const std::string& label) const {
  if (auto id = base_relations_.find(label)) return RelationId(*id * 2);
  const std::string suffix = kInverseSuffix;
  if (label.size() > suffix.size() && label.compare(label.size() - suffix.size(), suffix.size(), suffix) == 0) {
    if (auto id = base_relations_.find(label.substr(0, label.size() - suffix.size()))) return RelationId(*id * 2 + 1);
  }
  return std::nullopt;
}

std::size_t KnowledgeGraph::tail_count(EntityId head, RelationId r) const {
  if (head.index() >= num_entities() || r.index() >= num_relations())
    fail(ErrorCode::kInvalidArgument, "tail_count: id out of range");
  return std::max<std::size_t>(1, graph(GraphSelector::kTrain).tails(head, r).size());
}

std::vector<EntityId> KnowledgeGraph::traverse_answers(GraphSelector g, const QueryTree& tree) const {
  tree.check_ids(num_entities(), num_relations());
  const auto& adj = graph(g);
  const std::size_t n = num_entities();
  std::vector<std::vector<char>> truth(tree.size());

  for (NodeId id : tree.post_order()) {
    const auto& node = tree.node(id);
    auto& out = truth[id];
    out.assign(n, 0);
    switch (node.kind) {
      case NodeKind::kConstant:
        out[node.entity.index()] = 1;
        break;
      case NodeKind::kIntersection:
        std::fill(out.begin(), out.end(), 1);
        for (NodeId c : node.children)
          for (std::size_t e = 0; e < n; ++e) out[e] = out[e] && truth[c][e];
        break;
      case NodeKind::kUnion:
        for (NodeId c : node.children)
          for (std::size_t e = 0; e < n; ++e) out[e] = out[e] || truth[c][e];
        break;
      case NodeKind::kProjection: {
        const auto& child = truth[node.children[0]];
        for (std::size_t src = 0; src < n; ++src)
          if (child[src])
            for (EntityId t : adj.tails(EntityId(static_cast<std::uint32_t>(src)), node.relation)) out[t.index()] = 1;
        break;
      }
      case NodeKind::kAntiProjection: {
        // 1 iff some supported source lacks the edge to e.
        const auto& child = truth[node.children[0]];
        std::vector<std::uint32_t> linked(n, 0);
        std::uint32_t support = 0;
        for (std::size_t src = 0; src < n; ++src) {
          if (!child[src]) continue;
          ++support;
          for (EntityId t : adj.tails(EntityId(static_cast<std::uint32_t>(src)), node.relation)) ++linked[t.index()];
        }
        for (std::size_t e = 0; e < n; ++e) out[e] = linked[e] < support;
        break;
      }
    }
    for (NodeId c : node.children) std::vector<char>().swap(truth[c]);
  }

  std::vector<EntityId> answers;
  for (std::size_t e = 0; e < n; ++e)
    if (truth[0][e]) answers.emplace_back(static_cast<std::uint32_t>(e));
  return answers;
}

KnowledgeGraphLoader::KnowledgeGraphLoader(std::optional<std::string> entity_vocab,
                                           std::optional<std::string> relation_vocab) {
  if (entity_vocab) {
    entities_ = Vocabulary::from_file(*entity_vocab);
    fixed_entities_ = true;
  }
  if (relation_vocab) {
    relations_ = Vocabulary::from_file(*relation_vocab);
    fixed_relations_ = true;
  }
}

void KnowledgeGraphLoader::reserve_entities(std::size_t n) {
  while (entities_.size() < n) entities_.add("e" + std::to_string(entities_.size()));
}

void KnowledgeGraphLoader::reserve_relations(std::size_t n) {
  while (relations_.size() < n) relations_.add("r" + std::to_string(relations_.size()));
}

void KnowledgeGraphLoader::add_forward(std::uint32_t h, std::uint32_t base_r, std::uint32_t t, Split split) {
  auto& triples = splits_[static_cast<int>(split)];
  triples.push_back({EntityId(h), RelationId(2 * base_r), EntityId(t)});
  triples.push_back({EntityId(t), RelationId(2 * base_r + 1), EntityId(h)});
}

void KnowledgeGraphLoader::add_triple(const std::string& head, const std::string& relation, const std::string& tail,
                                      Split split) {
  auto resolve = [](Vocabulary& v, bool fixed, const std::string& label, const char* what) {
    if (fixed) {
      auto id = v.find(label);
      if (!id) fail(ErrorCode::kParse, std::string("unknown ") + what + " label '" + label + "'");
      return *id;
    }
    return v.add(label);
  };
  const auto h = resolve(entities_, fixed_entities_, head, "entity");
  const auto r = resolve(relations_, fixed_relations_, relation, "relation");
  const auto t = resolve(entities_, fixed_entities_, tail, "entity");
  add_forward(h, r, t, split);
}

void KnowledgeGraphLoader::add_triple(std::uint32_t head, std::uint32_t base_relation, std::uint32_t tail,
                                      Split split) {
  reserve_entities(std::max(head, tail) + 1);
  reserve_relations(base_relation + 1);
  add_forward(head, base_relation, tail, split);
}

void KnowledgeGraphLoader::load_file(const std::string& path, Split split) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open triple file '" + path + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty())
      fail(ErrorCode::kParse, path + ":" + std::to_string(lineno) + ": expected head<TAB>relation<TAB>tail");
    try {
      add_triple(fields[0], fields[1], fields[2], split);
    } catch (const Error& e) {
      fail(e.code(), path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

KnowledgeGraph KnowledgeGraphLoader::build() && {
  KnowledgeGraph kg;
  kg.entities_ = std::move(entities_);
  kg.base_relations_ = std::move(relations_);
  for (int s = 0; s < 3; ++s) {
    auto& v = splits_[s];
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    kg.splits_[s] = std::move(v);
  }
  const std::size_t n = kg.num_entities();
  const std::size_t r = kg.num_relations();
  std::vector<Triple> cumulative;
  for (int s = 0; s < 3; ++s) {
    cumulative.insert(cumulative.end(), kg.splits_[s].begin(), kg.splits_[s].end());
    std::sort(cumulative.begin(), cumulative.end());
    cumulative.erase(std::unique(cumulative.begin(), cumulative.end()), cumulative.end());
    kg.graphs_[s] = AdjacencyIndex(n, r, cumulative);
  }
  return kg;
}

KnowledgeGraph load_knowledge_graph(const DatasetPaths& paths) {
  KnowledgeGraphLoader loader(paths.entity_vocab, paths.relation_vocab);
  loader.load_file(paths.train, Split::kTrain);
  if (paths.valid) loader.load_file(*paths.valid, Split::kValid);
  if (paths.test) loader.load_file(*paths.test, Split::kTest);
  return std::move(loader).build();
}

}  // namespace qto
