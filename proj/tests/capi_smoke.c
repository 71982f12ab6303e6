/* Plain C consumer of the shared library: loads a graph, answers a query. */
#include <stdio.h>
#include <string.h>

#include "qto/qto.h"

#define CHECK(call)                                                       \
  do {                                                                    \
    qto_status st_ = (call);                                              \
    if (st_ != QTO_OK) {                                                  \
      fprintf(stderr, "%s: %s (%s)\n", #call, qto_last_error(), qto_status_name(st_)); \
      return 1;                                                           \
    }                                                                     \
  } while (0)

int main(int argc, char** argv) {
  if (argc < 2) {
    fprintf(stderr, "usage: %s TRAIN.tsv\n", argv[0]);
    return 2;
  }
  qto_kg_paths paths = {argv[1], NULL, NULL, NULL, NULL};
  qto_kg* kg = NULL;
  CHECK(qto_kg_load(&paths, &kg));

  qto_build_options bo;
  qto_build_options_init(&bo);
  bo.scorer = QTO_SCORER_ADJACENCY;
  qto_matrix* m = NULL;
  CHECK(qto_matrix_build(kg, &bo, &m, NULL));

  FILE* f = fopen(argv[1], "r");
  char h[128], r[128], t[128];
  if (!f || fscanf(f, "%127s %127s %127s", h, r, t) != 3) return 1;
  fclose(f);

  char query[512];
  snprintf(query, sizeof query, "{\"answer\":\"v\",\"disjuncts\":[[{\"rel\":\"%s\",\"from\":{\"const\":\"%s\"},\"to\":\"v\"}]]}", r, h);
  qto_query* q = NULL;
  CHECK(qto_query_parse(kg, query, &q));

  qto_answer_options ao;
  qto_answer_options_init(&ao);
  ao.topk = 1;
  char* out = NULL;
  CHECK(qto_answer(kg, m, q, &ao, &out));
  int ok = strstr(out, "\"value\": 1.0") != NULL;
  printf("%s\n", out);
  qto_string_free(out);

  if (qto_query_parse(kg, "{\"answer\":1}", &q) != QTO_ERR_PARSE) ok = 0;

  qto_query_free(q);
  qto_matrix_free(m);
  qto_kg_free(kg);
  puts(ok ? "capi smoke ok" : "capi smoke FAILED");
  return ok ? 0 : 1;
}
