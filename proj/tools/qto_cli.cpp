// Command-line front end over the qto C API.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "qto/qto.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitInput = 2;

struct DatasetFlags {
  std::string data_dir;
  std::string train, valid, test, entities, relations;

  void attach(CLI::App* cmd) {
    cmd->add_option("--data", data_dir, "Directory holding train.tsv, valid.tsv, test.tsv");
    cmd->add_option("--train", train, "Training triples (TSV)");
    cmd->add_option("--valid", valid, "Validation triples (TSV)");
    cmd->add_option("--test", test, "Test triples (TSV)");
    cmd->add_option("--entities", entities, "Entity vocabulary, one label per line");
    cmd->add_option("--relations", relations, "Relation vocabulary, one label per line");
  }
};

class Failure : public std::exception {
 public:
  Failure(int code, std::string msg) : code_(code), msg_(std::move(msg)) {}
  int code() const { return code_; }
  const char* what() const noexcept override { return msg_.c_str(); }

 private:
  int code_;
  std::string msg_;
};

int exit_code_for(qto_status s) {
  switch (s) {
    case QTO_OK: return kExitOk;
    case QTO_ERR_INVALID_ARGUMENT:
    case QTO_ERR_PARSE:
    case QTO_ERR_UNSUPPORTED_QUERY:
    case QTO_ERR_FORMAT: return kExitInput;
    default: return kExitRuntime;
  }
}

void check(qto_status s) {
  if (s != QTO_OK) throw Failure(exit_code_for(s), std::string(qto_status_name(s)) + ": " + qto_last_error());
}

/// Owns a string returned by the library.
struct OwnedString {
  char* p = nullptr;
  ~OwnedString() { qto_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

struct Kg {
  qto_kg* h = nullptr;
  ~Kg() { qto_kg_free(h); }
};
struct Matrix {
  qto_matrix* h = nullptr;
  ~Matrix() { qto_matrix_free(h); }
};
struct Query {
  qto_query* h = nullptr;
  ~Query() { qto_query_free(h); }
};

bool file_exists(const std::string& p) { return std::ifstream(p).good(); }

void load_kg(DatasetFlags f, Kg& kg) {
  if (!f.data_dir.empty()) {
    const std::string d = f.data_dir + "/";
    if (f.train.empty()) f.train = d + "train.tsv";
    if (f.valid.empty() && file_exists(d + "valid.tsv")) f.valid = d + "valid.tsv";
    if (f.test.empty() && file_exists(d + "test.tsv")) f.test = d + "test.tsv";
  }
  if (f.train.empty()) throw Failure(kExitInput, "either --train or --data is required");
  auto c = [](const std::string& s) { return s.empty() ? nullptr : s.c_str(); };
  qto_kg_paths paths{f.train.c_str(), c(f.valid), c(f.test), c(f.entities), c(f.relations)};
  check(qto_kg_load(&paths, &kg.h));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Failure(kExitRuntime, "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  if (!out || !(out << content)) throw Failure(kExitRuntime, "cannot write '" + path + "'");
}

qto_alpha_scope parse_scope(const std::string& s) {
  if (s == "query") return QTO_ALPHA_QUERY;
  if (s == "negated-atoms") return QTO_ALPHA_NEGATED_ATOMS;
  throw Failure(kExitInput, "--alpha-scope must be 'query' or 'negated-atoms'");
}

qto_graph parse_graph(const std::string& s) {
  if (s == "train") return QTO_GRAPH_TRAIN;
  if (s == "train+valid" || s == "valid") return QTO_GRAPH_TRAIN_VALID;
  if (s == "full" || s == "test") return QTO_GRAPH_FULL;
  throw Failure(kExitInput, "--graph must be train, train+valid or full");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Query computation tree optimization over knowledge graphs"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", qto_version());
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: QTO_THREADS or all cores)");

  // build-matrix
  auto* build = app.add_subcommand("build-matrix", "Build calibrated relation matrices");
  DatasetFlags build_data;
  build_data.attach(build);
  std::string emb, scorer, graph = "train", build_out;
  double eps = 0.0, delta = 1e-4, noise = 0.5;
  std::uint64_t build_seed = 0;
  build->add_option("--emb", emb, "ComplEx embeddings (QTOE)");
  build->add_option("--scorer", scorer, "adjacency | noisy (instead of --emb)");
  build->add_option("--graph", graph, "Graph for the adjacency scorer: train, train+valid, full");
  build->add_option("--noise", noise, "Noise level of the noisy scorer");
  build->add_option("--seed", build_seed, "Seed of the noisy scorer");
  build->add_option("--eps", eps, "Drop entries below this value");
  build->add_option("--delta", delta, "Cap for predicted entries is 1 - delta");
  build->add_option("--out", build_out, "Output QTOM file")->required();

  // answer
  auto* answer = app.add_subcommand("answer", "Rank answers of one query");
  DatasetFlags answer_data;
  answer_data.attach(answer);
  std::string matrix_path, query_arg, target, alpha_scope = "query";
  double alpha = 1.0;
  std::size_t topk = 10;
  bool explain = false;
  answer->add_option("--matrix", matrix_path, "QTOM file")->required();
  answer->add_option("--query", query_arg, "Query JSON file, or inline JSON")->required();
  answer->add_option("--topk", topk, "Number of answers to list");
  answer->add_option("--alpha", alpha, "Negation scale (>= 1)");
  answer->add_option("--alpha-scope", alpha_scope, "query | negated-atoms");
  answer->add_flag("--explain", explain, "Add variable assignments");
  answer->add_option("--target", target, "Explain this entity instead of the top answers");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate generated queries");
  DatasetFlags eval_data;
  eval_data.attach(eval);
  std::string eval_matrix, queries_path, valid_queries, report_out, text_out, eval_scope = "query";
  double eval_alpha = 1.0;
  bool interpretation = false, timing = false;
  eval->add_option("--matrix", eval_matrix, "QTOM file")->required();
  eval->add_option("--queries", queries_path, "Test query file (JSON lines)")->required();
  eval->add_option("--valid-queries", valid_queries, "Validation queries for threshold selection");
  eval->add_option("--alpha", eval_alpha, "Negation scale (>= 1)");
  eval->add_option("--alpha-scope", eval_scope, "query | negated-atoms");
  eval->add_flag("--interpretation", interpretation, "Report interpretation accuracy");
  eval->add_flag("--timing", timing, "Report ms per query (not reproducible)");
  eval->add_option("--out", report_out, "Write the JSON report here");
  eval->add_option("--text", text_out, "Write the text table here");

  // gen-queries
  auto* gen = app.add_subcommand("gen-queries", "Sample benchmark queries");
  DatasetFlags gen_data;
  gen_data.attach(gen);
  std::string structures = "all", split = "test", gen_out;
  std::size_t per_structure = 100;
  std::uint64_t gen_seed = 0;
  gen->add_option("--structures", structures, "Comma-separated structure names or 'all'");
  gen->add_option("--n", per_structure, "Queries per structure");
  gen->add_option("--seed", gen_seed, "Random seed");
  gen->add_option("--split", split, "valid | test");
  gen->add_option("--out", gen_out, "Output JSON lines file")->required();

  // oracle-check
  auto* oracle = app.add_subcommand("oracle-check", "Certify optimality against brute force");
  qto_oracle_options oracle_opts;
  qto_oracle_options_init(&oracle_opts);
  std::string oracle_out;
  oracle->add_option("--seed", oracle_opts.seed, "Random seed");
  oracle->add_option("--num", oracle_opts.num_instances, "Number of instances (cycled over the 14 structures)");
  oracle->add_option("--max-entities", oracle_opts.max_entities, "Largest instance graph");
  oracle->add_option("--budget", oracle_opts.budget, "Brute-force assignment budget");
  oracle->add_option("--out", oracle_out, "Write the JSON report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (build->parsed()) {
      if (emb.empty() == scorer.empty()) throw Failure(kExitInput, "build-matrix needs exactly one of --emb or --scorer");
      Kg kg;
      load_kg(build_data, kg);
      qto_build_options bo;
      qto_build_options_init(&bo);
      if (!emb.empty()) {
        bo.scorer = QTO_SCORER_EMBEDDING;
        bo.embedding_path = emb.c_str();
      } else if (scorer == "adjacency") {
        bo.scorer = QTO_SCORER_ADJACENCY;
        bo.graph = parse_graph(graph);
      } else if (scorer == "noisy") {
        bo.scorer = QTO_SCORER_NOISY_ORACLE;
        bo.noise_level = noise;
        bo.seed = build_seed;
      } else {
        throw Failure(kExitInput, "--scorer must be 'adjacency' or 'noisy'");
      }
      bo.epsilon = eps;
      bo.delta = delta;
      bo.threads = threads;
      Matrix m;
      OwnedString stats;
      check(qto_matrix_build(kg.h, &bo, &m.h, &stats.p));
      check(qto_matrix_save(m.h, build_out.c_str()));
      std::cout << stats.str() << '\n';
    } else if (answer->parsed()) {
      Kg kg;
      load_kg(answer_data, kg);
      Matrix m;
      check(qto_matrix_load(matrix_path.c_str(), &m.h));
      const std::string text = query_arg.find('{') != std::string::npos ? query_arg : read_file(query_arg);
      Query q;
      check(qto_query_parse(kg.h, text.c_str(), &q.h));
      qto_answer_options ao;
      qto_answer_options_init(&ao);
      ao.alpha = alpha;
      ao.alpha_scope = parse_scope(alpha_scope);
      ao.topk = topk;
      ao.explain = explain ? 1 : 0;
      ao.target = target.empty() ? nullptr : target.c_str();
      OwnedString result;
      check(qto_answer(kg.h, m.h, q.h, &ao, &result.p));
      std::cout << result.str() << '\n';
    } else if (eval->parsed()) {
      Kg kg;
      load_kg(eval_data, kg);
      Matrix m;
      check(qto_matrix_load(eval_matrix.c_str(), &m.h));
      qto_eval_options eo;
      qto_eval_options_init(&eo);
      eo.queries_path = queries_path.c_str();
      eo.valid_queries_path = valid_queries.empty() ? nullptr : valid_queries.c_str();
      eo.alpha = eval_alpha;
      eo.alpha_scope = parse_scope(eval_scope);
      eo.interpretation = interpretation ? 1 : 0;
      eo.timing = timing ? 1 : 0;
      eo.threads = threads;
      OwnedString json, text;
      check(qto_evaluate(kg.h, m.h, &eo, &json.p, &text.p));
      if (!report_out.empty()) write_file(report_out, json.str() + "\n");
      if (!text_out.empty()) write_file(text_out, text.str());
      std::cout << text.str();
    } else if (gen->parsed()) {
      Kg kg;
      load_kg(gen_data, kg);
      qto_generate_options go;
      qto_generate_options_init(&go);
      go.structures = structures.c_str();
      go.per_structure = per_structure;
      go.seed = gen_seed;
      if (split != "valid" && split != "test") throw Failure(kExitInput, "--split must be 'valid' or 'test'");
      go.split = split == "valid" ? 0 : 1;
      go.threads = threads;
      OwnedString summary;
      check(qto_generate_queries(kg.h, &go, gen_out.c_str(), &summary.p));
      for (const auto& w : nlohmann::json::parse(summary.str())["warnings"])
        std::cerr << "qto: warning: " << w.get<std::string>() << '\n';
      std::cout << summary.str() << '\n';
    } else if (oracle->parsed()) {
      OwnedString report;
      std::size_t passed = 0, total = 0;
      check(qto_oracle_check(&oracle_opts, &report.p, &passed, &total));
      if (!oracle_out.empty()) write_file(oracle_out, report.str() + "\n");
      std::cout << passed << "/" << total << " structures×seeds optimal\n";
      if (passed != total) {
        std::cerr << report.str() << '\n';
        return kExitRuntime;
      }
    }
  } catch (const Failure& f) {
    std::cerr << "qto: " << f.what() << '\n';
    return f.code();
  }
  return kExitOk;
}
