#include "qto/qto.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <memory>
#include <new>
#include <optional>
#include <string>

#include "eval_harness.hpp"
#include "kg_store.hpp"
#include "neural_adjacency.hpp"
#include "oracle.hpp"
#include "parallel.hpp"
#include "qto_solver.hpp"
#include "query_model.hpp"
#include "structures.hpp"

struct qto_kg {
  qto::KnowledgeGraph kg;
  bool has_held_out = false;
};

struct qto_matrix {
  qto::NeuralAdjacency m;
};

struct qto_query {
  qto::DnfQuery query;
  qto::QueryTree tree;
};

namespace {

using nlohmann::json;

thread_local std::string g_last_error;

qto_status to_status(qto::ErrorCode c) {
  switch (c) {
    case qto::ErrorCode::kInvalidArgument: return QTO_ERR_INVALID_ARGUMENT;
    case qto::ErrorCode::kIo: return QTO_ERR_IO;
    case qto::ErrorCode::kFormat: return QTO_ERR_FORMAT;
    case qto::ErrorCode::kParse: return QTO_ERR_PARSE;
    case qto::ErrorCode::kUnsupportedQuery: return QTO_ERR_UNSUPPORTED_QUERY;
    case qto::ErrorCode::kBudgetExceeded: return QTO_ERR_BUDGET;
    case qto::ErrorCode::kInternal: return QTO_ERR_INTERNAL;
  }
  return QTO_ERR_INTERNAL;
}

template <class Fn>
qto_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return QTO_OK;
  } catch (const qto::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return QTO_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return QTO_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return QTO_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) qto::fail(qto::ErrorCode::kInvalidArgument, std::string(what) + " must not be NULL");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void emit(char** dst, const std::string& s) {
  if (dst) *dst = dup(s);
}

std::optional<std::string> opt_path(const char* p) {
  if (!p || !*p) return std::nullopt;
  return std::string(p);
}

qto::NegationScaling scaling(double alpha, qto_alpha_scope scope) {
  if (!(alpha >= 1.0)) qto::fail(qto::ErrorCode::kInvalidArgument, "alpha must be >= 1");
  return {alpha, scope == QTO_ALPHA_NEGATED_ATOMS ? qto::AlphaScope::kNegatedAtoms : qto::AlphaScope::kQuery};
}

void check_shapes(const qto::KnowledgeGraph& kg, const qto::NeuralAdjacency& m) {
  if (kg.num_entities() != m.num_entities() || kg.num_relations() != m.num_relations())
    qto::fail(qto::ErrorCode::kInvalidArgument,
              "matrix has " + std::to_string(m.num_entities()) + " entities and " + std::to_string(m.num_relations()) +
                  " relations, graph has " + std::to_string(kg.num_entities()) + " and " +
                  std::to_string(kg.num_relations()));
}

json explain(const qto_kg& h, const qto::NeuralAdjacency& m, const qto_query& q, const qto::ForwardCache& cache,
             qto::EntityId target, const qto::NegationScaling& sc) {
  const auto& kg = h.kg;
  const auto a = qto::backward(q.tree, cache, m, target, sc);
  json assignment = json::object();
  json atoms = json::array();
  for (qto::NodeId id = 0; id < q.tree.size(); ++id) {
    const auto& n = q.tree.node(id);
    if (n.kind == qto::NodeKind::kConstant) continue;
    assignment[n.variable] = kg.entity_label(a.entities[id]);
    if (n.kind != qto::NodeKind::kProjection && n.kind != qto::NodeKind::kAntiProjection) continue;
    const auto& child = q.tree.node(n.children[0]);
    const qto::EntityId src = child.kind == qto::NodeKind::kConstant ? child.entity : a.entities[n.children[0]];
    json known = nullptr;
    if (h.has_held_out) known = kg.graph(qto::GraphSelector::kFull).contains(src, n.relation, a.entities[id]);
    atoms.push_back({{"atom", qto::describe_edge(q.tree, id, a.entities, kg)}, {"in_full_graph", known}});
  }
  return {{"answer", kg.entity_label(target)}, {"value", a.value}, {"assignment", assignment}, {"atoms", atoms}};
}

}  // namespace

extern "C" {

const char* qto_version(void) { return "1.0.0"; }

const char* qto_last_error(void) { return g_last_error.c_str(); }

const char* qto_status_name(qto_status status) {
  switch (status) {
    case QTO_OK: return "ok";
    case QTO_ERR_INVALID_ARGUMENT: return "invalid argument";
    case QTO_ERR_IO: return "i/o error";
    case QTO_ERR_FORMAT: return "format error";
    case QTO_ERR_PARSE: return "parse error";
    case QTO_ERR_UNSUPPORTED_QUERY: return "unsupported query";
    case QTO_ERR_BUDGET: return "budget exceeded";
    case QTO_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void qto_string_free(char* s) { std::free(s); }

qto_status qto_kg_load(const qto_kg_paths* paths, qto_kg** out) {
  return guarded([&] {
    require(paths, "paths");
    require(out, "out");
    require(paths->train, "paths->train");
    qto::DatasetPaths p{paths->train, opt_path(paths->valid), opt_path(paths->test), opt_path(paths->entity_vocab),
                        opt_path(paths->relation_vocab)};
    auto h = std::make_unique<qto_kg>();
    h->kg = qto::load_knowledge_graph(p);
    h->has_held_out = p.valid.has_value() || p.test.has_value();
    *out = h.release();
  });
}

void qto_kg_free(qto_kg* kg) { delete kg; }
size_t qto_kg_num_entities(const qto_kg* kg) { return kg ? kg->kg.num_entities() : 0; }
size_t qto_kg_num_relations(const qto_kg* kg) { return kg ? kg->kg.num_relations() : 0; }
size_t qto_kg_num_edges(const qto_kg* kg, int split) {
  if (!kg || split < 0 || split > 2) return 0;
  return kg->kg.num_forward_edges(static_cast<qto::Split>(split));
}

void qto_build_options_init(qto_build_options* opts) {
  if (!opts) return;
  opts->scorer = QTO_SCORER_ADJACENCY;
  opts->embedding_path = nullptr;
  opts->graph = QTO_GRAPH_TRAIN;
  opts->noise_level = 0.5;
  opts->seed = 0;
  opts->epsilon = 0.0;
  opts->delta = qto::NeuralAdjacency::kDefaultDelta;
  opts->threads = 0;
}

qto_status qto_matrix_build(const qto_kg* kg, const qto_build_options* opts, qto_matrix** out, char** stats_json) {
  return guarded([&] {
    require(kg, "kg");
    require(opts, "opts");
    require(out, "out");
    qto::ScoreSource src;
    switch (opts->scorer) {
      case QTO_SCORER_EMBEDDING: {
        require(opts->embedding_path, "embedding_path");
        src = qto::EmbeddingScorer{
            std::make_shared<const qto::EmbeddingTable>(qto::EmbeddingTable::load(opts->embedding_path))};
        break;
      }
      case QTO_SCORER_ADJACENCY:
        if (opts->graph < QTO_GRAPH_TRAIN || opts->graph > QTO_GRAPH_FULL)
          qto::fail(qto::ErrorCode::kInvalidArgument, "unknown graph selector");
        src = qto::AdjacencyScorer{static_cast<qto::GraphSelector>(opts->graph)};
        break;
      case QTO_SCORER_NOISY_ORACLE:
        if (!(opts->noise_level >= 0.0 && opts->noise_level < 1.0))
          qto::fail(qto::ErrorCode::kInvalidArgument, "noise level must lie in [0, 1)");
        src = qto::NoisyOracleScorer{opts->noise_level, opts->seed};
        break;
      default:
        qto::fail(qto::ErrorCode::kInvalidArgument, "unknown scorer kind");
    }
    qto::BuildOptions bo;
    bo.epsilon = opts->epsilon;
    bo.delta = opts->delta;
    bo.threads = qto::resolve_threads(opts->threads);
    qto::BuildStats stats;
    auto h = std::make_unique<qto_matrix>();
    h->m = qto::build_matrix(kg->kg, src, bo, &stats);
    emit(stats_json, json{{"nnz", stats.nnz}, {"density", stats.density}, {"seconds", stats.seconds}}.dump());
    *out = h.release();
  });
}

qto_status qto_matrix_load(const char* path, qto_matrix** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto h = std::make_unique<qto_matrix>();
    h->m = qto::NeuralAdjacency::load(path);
    *out = h.release();
  });
}

qto_status qto_matrix_save(const qto_matrix* m, const char* path) {
  return guarded([&] {
    require(m, "matrix");
    require(path, "path");
    m->m.save(path);
  });
}

void qto_matrix_free(qto_matrix* m) { delete m; }
size_t qto_matrix_nnz(const qto_matrix* m) { return m ? m->m.nnz() : 0; }
size_t qto_matrix_num_entities(const qto_matrix* m) { return m ? m->m.num_entities() : 0; }

qto_status qto_matrix_value(const qto_matrix* m, const qto_kg* kg, const char* head, const char* relation,
                            const char* tail, double* value) {
  return guarded([&] {
    require(m, "matrix");
    require(kg, "kg");
    require(value, "value");
    check_shapes(kg->kg, m->m);
    auto h = kg->kg.find_entity(head ? head : "");
    auto t = kg->kg.find_entity(tail ? tail : "");
    auto r = kg->kg.find_relation(relation ? relation : "");
    if (!h || !t || !r) qto::fail(qto::ErrorCode::kInvalidArgument, "unknown entity or relation label");
    *value = m->m.relation(*r).at(h->index(), t->index());
  });
}

qto_status qto_query_parse(const qto_kg* kg, const char* text, qto_query** out) {
  return guarded([&] {
    require(kg, "kg");
    require(text, "json");
    require(out, "out");
    auto h = std::make_unique<qto_query>();
    h->query = qto::parse_query(text, kg->kg);
    h->tree = qto::to_computation_tree(h->query);
    *out = h.release();
  });
}

void qto_query_free(qto_query* q) { delete q; }

qto_status qto_query_to_json(const qto_kg* kg, const qto_query* q, char** out) {
  return guarded([&] {
    require(kg, "kg");
    require(q, "query");
    require(out, "out");
    *out = dup(qto::serialize_query(q->query, kg->kg));
  });
}

qto_status qto_query_tree_json(const qto_kg* kg, const qto_query* q, char** out) {
  return guarded([&] {
    require(kg, "kg");
    require(q, "query");
    require(out, "out");
    *out = dup(qto::tree_to_json(q->tree, kg->kg).dump());
  });
}

void qto_answer_options_init(qto_answer_options* opts) {
  if (!opts) return;
  opts->alpha = 1.0;
  opts->alpha_scope = QTO_ALPHA_QUERY;
  opts->topk = 10;
  opts->explain = 0;
  opts->target = nullptr;
}

qto_status qto_answer(const qto_kg* kg, const qto_matrix* m, const qto_query* q, const qto_answer_options* opts,
                      char** result_json) {
  return guarded([&] {
    require(kg, "kg");
    require(m, "matrix");
    require(q, "query");
    require(opts, "opts");
    require(result_json, "result_json");
    check_shapes(kg->kg, m->m);
    const auto sc = scaling(opts->alpha, opts->alpha_scope);
    std::optional<qto::EntityId> target;
    if (opts->target) {
      target = kg->kg.find_entity(opts->target);
      if (!target) qto::fail(qto::ErrorCode::kInvalidArgument, std::string("unknown target entity '") + opts->target + "'");
    }
    const auto cache = qto::forward(q->tree, m->m, sc);
    const auto ranked = qto::rank_answers(cache.root());
    json answers = json::array();
    const std::size_t k = std::min(opts->topk, ranked.size());
    for (std::size_t i = 0; i < k; ++i)
      answers.push_back({{"rank", i + 1}, {"entity", kg->kg.entity_label(ranked[i].first)}, {"value", ranked[i].second}});
    json result = {{"tree", q->tree.shape()}, {"answers", answers}, {"max_support", cache.max_support}};
    if (opts->explain || target) {
      json explanations = json::array();
      if (target) {
        explanations.push_back(explain(*kg, m->m, *q, cache, *target, sc));
      } else {
        for (std::size_t i = 0; i < k; ++i) explanations.push_back(explain(*kg, m->m, *q, cache, ranked[i].first, sc));
      }
      result["explanations"] = std::move(explanations);
    }
    *result_json = dup(result.dump(2));
  });
}

void qto_generate_options_init(qto_generate_options* opts) {
  if (!opts) return;
  opts->structures = "all";
  opts->per_structure = 100;
  opts->seed = 0;
  opts->split = 1;
  opts->threads = 0;
}

qto_status qto_generate_queries(const qto_kg* kg, const qto_generate_options* opts, const char* out_path,
                                char** summary_json) {
  return guarded([&] {
    require(kg, "kg");
    require(opts, "opts");
    require(out_path, "out_path");
    if (opts->split != 0 && opts->split != 1) qto::fail(qto::ErrorCode::kInvalidArgument, "split must be 0 or 1");
    qto::GenerateOptions go;
    go.structures = qto::parse_structure_list(opts->structures ? opts->structures : "all");
    go.per_structure = opts->per_structure;
    go.seed = opts->seed;
    go.split = opts->split == 0 ? qto::QuerySplit::kValid : qto::QuerySplit::kTest;
    go.threads = qto::resolve_threads(opts->threads);
    const auto result = qto::generate_queries(kg->kg, go);
    qto::save_queries(out_path, result.queries, kg->kg);
    json counts = json::object();
    for (const auto& s : go.structures) counts[s] = 0;
    for (const auto& q : result.queries) counts[q.structure] = counts[q.structure].get<std::size_t>() + 1;
    emit(summary_json, json{{"split", qto::to_string(go.split)},
                            {"seed", go.seed},
                            {"queries", result.queries.size()},
                            {"per_structure", counts},
                            {"warnings", result.warnings}}
                           .dump(2));
  });
}

void qto_eval_options_init(qto_eval_options* opts) {
  if (!opts) return;
  opts->queries_path = nullptr;
  opts->valid_queries_path = nullptr;
  opts->alpha = 1.0;
  opts->alpha_scope = QTO_ALPHA_QUERY;
  opts->interpretation = 0;
  opts->timing = 0;
  opts->threads = 0;
}

qto_status qto_evaluate(const qto_kg* kg, const qto_matrix* m, const qto_eval_options* opts, char** report_json,
                        char** report_text) {
  return guarded([&] {
    require(kg, "kg");
    require(m, "matrix");
    require(opts, "opts");
    require(opts->queries_path, "queries_path");
    check_shapes(kg->kg, m->m);
    qto::EvalOptions eo;
    eo.scaling = scaling(opts->alpha, opts->alpha_scope);
    eo.interpretation = opts->interpretation != 0;
    eo.timing = opts->timing != 0;
    eo.threads = qto::resolve_threads(opts->threads);
    const auto queries = qto::load_queries(opts->queries_path, kg->kg);
    if (queries.empty()) qto::fail(qto::ErrorCode::kInvalidArgument, "query file contains no queries");
    auto report = qto::run_eval(kg->kg, m->m, queries, eo);
    if (opts->valid_queries_path) {
      const auto valid = qto::load_queries(opts->valid_queries_path, kg->kg);
      report.cardinality = qto::eval_cardinality(m->m, valid, queries, eo);
    }
    emit(report_json, report.to_json().dump(2));
    emit(report_text, report.to_text());
  });
}

void qto_oracle_options_init(qto_oracle_options* opts) {
  if (!opts) return;
  opts->seed = 0;
  opts->num_instances = 14;
  opts->max_entities = 25;
  opts->budget = qto::oracle::kDefaultBudget;
}

qto_status qto_oracle_check(const qto_oracle_options* opts, char** report_json, size_t* passed, size_t* total) {
  return guarded([&] {
    require(opts, "opts");
    const auto report =
        qto::oracle::certify_optimality(opts->seed, opts->num_instances, opts->max_entities, opts->budget);
    if (passed) *passed = report.passed;
    if (total) *total = report.total;
    emit(report_json, json{{"seed", opts->seed},
                           {"max_entities", opts->max_entities},
                           {"passed", report.passed},
                           {"total", report.total},
                           {"failures", report.failures}}
                          .dump(2));
  });
}

}  // extern "C"
