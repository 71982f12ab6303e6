/*
 * qto: exact optimization over query computation trees for complex logical
 * queries on incomplete knowledge graphs.
 *
 * All handles are opaque. Functions returning qto_status leave a message for
 * qto_last_error() on failure (thread-local, valid until the next call on the
 * same thread). Strings returned through char** are heap-allocated and must be
 * released with qto_string_free().
 */
#ifndef QTO_QTO_H
#define QTO_QTO_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define QTO_API __declspec(dllexport)
#else
#define QTO_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum qto_status {
  QTO_OK = 0,
  QTO_ERR_INVALID_ARGUMENT = 1,
  QTO_ERR_IO = 2,
  QTO_ERR_FORMAT = 3,
  QTO_ERR_PARSE = 4,
  QTO_ERR_UNSUPPORTED_QUERY = 5,
  QTO_ERR_BUDGET = 6,
  QTO_ERR_INTERNAL = 7
} qto_status;

typedef struct qto_kg qto_kg;
typedef struct qto_matrix qto_matrix;
typedef struct qto_query qto_query;

QTO_API const char* qto_version(void);
QTO_API const char* qto_last_error(void);
QTO_API const char* qto_status_name(qto_status status);
QTO_API void qto_string_free(char* s);

/* ---- knowledge graph ---- */

typedef struct qto_kg_paths {
  const char* train;          /* required */
  const char* valid;          /* optional, may be NULL */
  const char* test;           /* optional */
  const char* entity_vocab;   /* optional: one label per line */
  const char* relation_vocab; /* optional: forward relation labels */
} qto_kg_paths;

QTO_API qto_status qto_kg_load(const qto_kg_paths* paths, qto_kg** out);
QTO_API void qto_kg_free(qto_kg* kg);
QTO_API size_t qto_kg_num_entities(const qto_kg* kg);
/* Relations including inverses. */
QTO_API size_t qto_kg_num_relations(const qto_kg* kg);
/* Forward edges in split 0 = train, 1 = valid, 2 = test. */
QTO_API size_t qto_kg_num_edges(const qto_kg* kg, int split);

/* ---- neural adjacency matrices ---- */

typedef enum qto_scorer {
  QTO_SCORER_EMBEDDING = 0,
  QTO_SCORER_ADJACENCY = 1,
  QTO_SCORER_NOISY_ORACLE = 2
} qto_scorer;

typedef enum qto_graph { QTO_GRAPH_TRAIN = 0, QTO_GRAPH_TRAIN_VALID = 1, QTO_GRAPH_FULL = 2 } qto_graph;

typedef struct qto_build_options {
  qto_scorer scorer;
  const char* embedding_path; /* QTOE file, embedding scorer only */
  qto_graph graph;            /* adjacency scorer only */
  double noise_level;         /* noisy oracle only */
  uint64_t seed;              /* noisy oracle only */
  double epsilon;
  double delta;
  int threads; /* <= 0: QTO_THREADS or all cores */
} qto_build_options;

QTO_API void qto_build_options_init(qto_build_options* opts);
/* stats_json (optional) receives {"nnz","density","seconds"}. */
QTO_API qto_status qto_matrix_build(const qto_kg* kg, const qto_build_options* opts, qto_matrix** out,
                                    char** stats_json);
QTO_API qto_status qto_matrix_load(const char* path, qto_matrix** out);
QTO_API qto_status qto_matrix_save(const qto_matrix* m, const char* path);
QTO_API void qto_matrix_free(qto_matrix* m);
QTO_API size_t qto_matrix_nnz(const qto_matrix* m);
QTO_API size_t qto_matrix_num_entities(const qto_matrix* m);
/* Stored value of M_r[head, tail]; labels resolved against kg. */
QTO_API qto_status qto_matrix_value(const qto_matrix* m, const qto_kg* kg, const char* head, const char* relation,
                                    const char* tail, double* value);

/* ---- queries ---- */

/* Parses the JSON query format and converts it to a computation tree. */
QTO_API qto_status qto_query_parse(const qto_kg* kg, const char* json, qto_query** out);
QTO_API void qto_query_free(qto_query* q);
QTO_API qto_status qto_query_to_json(const qto_kg* kg, const qto_query* q, char** json);
QTO_API qto_status qto_query_tree_json(const qto_kg* kg, const qto_query* q, char** json);

typedef enum qto_alpha_scope { QTO_ALPHA_QUERY = 0, QTO_ALPHA_NEGATED_ATOMS = 1 } qto_alpha_scope;

typedef struct qto_answer_options {
  double alpha;
  qto_alpha_scope alpha_scope;
  size_t topk;
  int explain;        /* nonzero: add assignments for the listed answers */
  const char* target; /* optional entity label to explain */
} qto_answer_options;

QTO_API void qto_answer_options_init(qto_answer_options* opts);
QTO_API qto_status qto_answer(const qto_kg* kg, const qto_matrix* m, const qto_query* q,
                              const qto_answer_options* opts, char** result_json);

/* ---- query generation and evaluation ---- */

typedef struct qto_generate_options {
  const char* structures; /* comma separated, "all" for the 14 standard ones */
  size_t per_structure;
  uint64_t seed;
  int split; /* 0 = valid, 1 = test */
  int threads;
} qto_generate_options;

QTO_API void qto_generate_options_init(qto_generate_options* opts);
/* Writes JSON lines to out_path; summary_json lists counts and warnings. */
QTO_API qto_status qto_generate_queries(const qto_kg* kg, const qto_generate_options* opts, const char* out_path,
                                        char** summary_json);

typedef struct qto_eval_options {
  const char* queries_path;
  const char* valid_queries_path; /* optional: enables cardinality selection */
  double alpha;
  qto_alpha_scope alpha_scope;
  int interpretation;
  int timing;
  int threads;
} qto_eval_options;

QTO_API void qto_eval_options_init(qto_eval_options* opts);
QTO_API qto_status qto_evaluate(const qto_kg* kg, const qto_matrix* m, const qto_eval_options* opts,
                                char** report_json, char** report_text);

typedef struct qto_oracle_options {
  uint64_t seed;
  size_t num_instances;
  size_t max_entities;
  uint64_t budget;
} qto_oracle_options;

QTO_API void qto_oracle_options_init(qto_oracle_options* opts);
/* QTO_OK even when instances disagree; compare *passed with *total. */
QTO_API qto_status qto_oracle_check(const qto_oracle_options* opts, char** report_json, size_t* passed,
                                    size_t* total);

#ifdef __cplusplus
}
#endif

#endif /* QTO_QTO_H */
