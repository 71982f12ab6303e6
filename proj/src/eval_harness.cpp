#include "eval_harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "oracle.hpp"
#include "parallel.hpp"

namespace qto {

using nlohmann::json;

double filtered_rank(std::span<const double> values, EntityId target, std::span<const EntityId> filter_out) {
  if (target.index() >= values.size()) fail(ErrorCode::kInvalidArgument, "filtered_rank: target out of range");
  const double v = values[target.index()];
  std::size_t greater = 0, ties = 0;
  for (std::size_t e = 0; e < values.size(); ++e) {
    if (e == target.index()) continue;
    if (std::binary_search(filter_out.begin(), filter_out.end(), EntityId(static_cast<std::uint32_t>(e)))) continue;
    if (values[e] > v)
      ++greater;
    else if (values[e] == v)
      ++ties;
  }
  return 1.0 + static_cast<double>(greater) + static_cast<double>(ties) / 2.0;
}

namespace {

constexpr std::array<std::size_t, 3> kHitsAt = {1, 3, 10};

/// Values of the non-answer entities, ascending; ranks against them equal
/// filtered_rank with all answers filtered.
class RankTable {
 public:
  RankTable(const TruthVector& root, const std::vector<EntityId>& easy, const std::vector<EntityId>& hard) {
    std::vector<char> answer(root.size(), 0);
    for (EntityId e : easy) answer[e.index()] = 1;
    for (EntityId e : hard) answer[e.index()] = 1;
    for (std::size_t e = 0; e < root.size(); ++e)
      if (!answer[e]) others_.push_back(root[e]);
    std::sort(others_.begin(), others_.end());
  }

  double rank(double v) const {
    const auto lo = std::lower_bound(others_.begin(), others_.end(), v);
    const auto hi = std::upper_bound(lo, others_.end(), v);
    return 1.0 + static_cast<double>(others_.end() - hi) + static_cast<double>(hi - lo) / 2.0;
  }

 private:
  std::vector<double> others_;
};

struct QueryOutcome {
  double mrr = 0.0;
  std::array<double, 3> hits{};
  std::size_t hard = 0;
  std::size_t easy = 0;
  std::size_t easy_one = 0;
  std::size_t easy_top = 0;
  std::size_t max_support = 0;
  double seconds = 0.0;
  std::array<std::size_t, 4> interp_ok{};
  std::array<std::size_t, 4> interp_total{};
};

QueryOutcome evaluate_query(const KnowledgeGraph& kg, const NeuralAdjacency& m, const GeneratedQuery& q,
                            const EvalOptions& opts, bool interpret) {
  QueryOutcome out;
  const auto started = std::chrono::steady_clock::now();
  const ForwardCache cache = forward(q.tree, m, opts.scaling);
  const TruthVector& root = cache.root();
  const RankTable table(root, q.easy, q.hard);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  out.max_support = cache.max_support;

  out.hard = q.hard.size();
  for (EntityId e : q.hard) {
    const double rank = table.rank(root[e.index()]);
    out.mrr += 1.0 / rank;
    for (std::size_t k = 0; k < kHitsAt.size(); ++k) out.hits[k] += rank <= static_cast<double>(kHitsAt[k]) ? 1.0 : 0.0;
    if (interpret) {
      const Assignment a = backward(q.tree, cache, m, e, opts.scaling);
      const bool ok = oracle::check_interpretation(q.tree, a.entities, kg);
      for (std::size_t k = 0; k < 4; ++k) {
        if (k < 3 && rank > static_cast<double>(kHitsAt[k])) continue;
        ++out.interp_total[k];
        out.interp_ok[k] += ok ? 1 : 0;
      }
    }
  }
  if (out.hard > 0) {
    out.mrr /= static_cast<double>(out.hard);
    for (auto& h : out.hits) h /= static_cast<double>(out.hard);
  }
  out.easy = q.easy.size();
  for (EntityId e : q.easy) {
    const double v = root[e.index()];
    out.easy_one += v == 1.0 ? 1 : 0;
    out.easy_top += table.rank(v) <= 1.0 ? 1 : 0;
  }
  return out;
}

std::vector<std::string> report_order(std::span<const GeneratedQuery> queries) {
  std::vector<std::string> order;
  for (const auto* list : {&standard_structures(), &extended_structures()})
    for (const auto& t : *list)
      if (std::any_of(queries.begin(), queries.end(), [&](const auto& q) { return q.structure == t.name; }))
        order.push_back(t.name);
  return order;
}

Averages average(const std::vector<StructureMetrics>& ms, bool (*member)(const std::string&)) {
  Averages a;
  double mrr = 0, h1 = 0, h3 = 0, h10 = 0;
  std::size_t n = 0;
  for (const auto& m : ms) {
    if (!member(m.structure)) continue;
    mrr += m.mrr;
    h1 += m.hits1;
    h3 += m.hits3;
    h10 += m.hits10;
    ++n;
  }
  if (n == 0) return a;
  const double d = static_cast<double>(n);
  return {mrr / d, h1 / d, h3 / d, h10 / d};
}

bool standard_epfo(const std::string& s) { return is_epfo_structure(s); }
bool negation(const std::string& s) { return is_negation_structure(s); }
bool ood(const std::string& s) { return is_ood_structure(s); }

std::optional<double> percent(std::size_t ok, std::size_t total) {
  if (total == 0) return std::nullopt;
  return 100.0 * static_cast<double>(ok) / static_cast<double>(total);
}

}  // namespace

EvalReport run_eval(const KnowledgeGraph& kg, const NeuralAdjacency& m, std::span<const GeneratedQuery> queries,
                    const EvalOptions& opts) {
  if (m.num_entities() != kg.num_entities() || m.num_relations() != kg.num_relations())
    fail(ErrorCode::kInvalidArgument, "matrix shape (" + std::to_string(m.num_entities()) + " entities, " +
                                          std::to_string(m.num_relations()) + " relations) does not match the graph");
  std::vector<QueryOutcome> outcomes(queries.size());
  parallel_for(queries.size(), opts.threads, [&](std::size_t i) {
    const auto& q = queries[i];
    outcomes[i] = evaluate_query(kg, m, q, opts, opts.interpretation && is_interpretable_structure(q.structure));
  });

  EvalReport report;
  for (const auto& name : report_order(queries)) {
    StructureMetrics s;
    s.structure = name;
    InterpretationMetrics im;
    im.structure = name;
    std::size_t easy_one = 0, easy_top = 0;
    std::array<std::size_t, 4> interp_ok{};
    double seconds = 0.0;
    for (std::size_t i = 0; i < queries.size(); ++i) {
      if (queries[i].structure != name) continue;
      const auto& o = outcomes[i];
      ++s.queries;
      s.hard_answers += o.hard;
      s.mrr += o.mrr;
      s.hits1 += o.hits[0];
      s.hits3 += o.hits[1];
      s.hits10 += o.hits[2];
      s.easy_answers += o.easy;
      easy_one += o.easy_one;
      easy_top += o.easy_top;
      s.max_support = std::max(s.max_support, o.max_support);
      seconds += o.seconds;
      for (std::size_t k = 0; k < 4; ++k) {
        im.counted[k] += o.interp_total[k];
        interp_ok[k] += o.interp_ok[k];
      }
    }
    const double nq = static_cast<double>(s.queries);
    s.mrr *= 100.0 / nq;
    s.hits1 *= 100.0 / nq;
    s.hits3 *= 100.0 / nq;
    s.hits10 *= 100.0 / nq;
    if (s.easy_answers > 0) {
      s.easy_exact_one = *percent(easy_one, s.easy_answers);
      s.easy_hits1 = *percent(easy_top, s.easy_answers);
    }
    if (opts.timing) s.ms_per_query = 1000.0 * seconds / nq;
    report.structures.push_back(s);
    if (opts.interpretation && is_interpretable_structure(name)) {
      for (std::size_t k = 0; k < 4; ++k) im.accuracy[k] = percent(interp_ok[k], im.counted[k]);
      report.interpretation.push_back(im);
    }
  }
  report.avg_p = average(report.structures, standard_epfo);
  report.avg_ood = average(report.structures, ood);
  report.avg_n = average(report.structures, negation);
  report.metadata = {
      {"queries", queries.size()},
      {"alpha", opts.scaling.alpha},
      {"alpha_scope", to_string(opts.scaling.scope)},
      {"tie_rule", "mean rank"},
      {"ranking", "filtered: all other easy and hard answers removed"},
  };
  if (opts.interpretation)
    report.metadata["interpretation_definition"] =
        "backward assignment of each hard answer ranked within top K (filtered) checked against the full graph";
  return report;
}

CardinalityResult eval_cardinality(const NeuralAdjacency& m, std::span<const GeneratedQuery> valid,
                                   std::span<const GeneratedQuery> test, const EvalOptions& opts) {
  if (valid.empty() || test.empty()) fail(ErrorCode::kInvalidArgument, "cardinality needs validation and test queries");
  constexpr int kSteps = 9;
  // Per query and threshold: |pred - truth| / truth.
  auto errors = [&](std::span<const GeneratedQuery> qs) {
    std::vector<std::array<double, kSteps>> err(qs.size());
    parallel_for(qs.size(), opts.threads, [&](std::size_t i) {
      const ForwardCache cache = forward(qs[i].tree, m, opts.scaling);
      const double truth = static_cast<double>(qs[i].easy.size() + qs[i].hard.size());
      for (int k = 0; k < kSteps; ++k) {
        const double pred = static_cast<double>(predict_cardinality(cache.root(), (k + 1) / 10.0));
        err[i][k] = std::abs(pred - truth) / truth;
      }
    });
    return err;
  };
  const auto valid_err = errors(valid);
  const auto test_err = errors(test);
  auto mean_at = [](const std::vector<std::array<double, kSteps>>& err, int k) {
    double s = 0.0;
    for (const auto& e : err) s += e[k];
    return 100.0 * s / static_cast<double>(err.size());
  };
  int best = 0;
  for (int k = 1; k < kSteps; ++k)
    if (mean_at(valid_err, k) < mean_at(valid_err, best)) best = k;

  CardinalityResult r;
  r.threshold = (best + 1) / 10.0;
  r.valid_mape = mean_at(valid_err, best);
  r.test_mape = mean_at(test_err, best);
  for (const auto& name : report_order(test)) {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < test.size(); ++i)
      if (test[i].structure == name) {
        s += test_err[i][best];
        ++n;
      }
    r.per_structure.emplace_back(name, 100.0 * s / static_cast<double>(n));
  }
  return r;
}

std::vector<InterpretationMetrics> eval_interpretation(const KnowledgeGraph& kg, const NeuralAdjacency& m,
                                                       std::span<const GeneratedQuery> queries,
                                                       const EvalOptions& opts) {
  for (const auto& q : queries)
    if (!is_interpretable_structure(q.structure))
      fail(ErrorCode::kInvalidArgument, q.structure + ": structure trivially interpretable");
  EvalOptions o = opts;
  o.interpretation = true;
  return run_eval(kg, m, queries, o).interpretation;
}

// ---- report rendering --------------------------------------------------------

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json averages_json(const Averages& a) {
  return {{"mrr", opt(a.mrr)}, {"hits@1", opt(a.hits1)}, {"hits@3", opt(a.hits3)}, {"hits@10", opt(a.hits10)}};
}

std::string cell(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", *v);
  return buf;
}

std::string render_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& r : rows) width[c] = std::max(width[c], r[c].size());
  }
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c == 0) {
        out << cells[c] << std::string(width[c] - cells[c].size(), ' ');
      } else {
        out << "  " << std::string(width[c] - cells[c].size(), ' ') << cells[c];
      }
    }
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out.str();
}

const char* kInterpHeaders[4] = {"hits@1", "hits@3", "hits@10", "all"};

}  // namespace

json EvalReport::to_json() const {
  json per = json::object();
  for (const auto& s : structures) {
    json j = {{"queries", s.queries},
              {"hard_answers", s.hard_answers},
              {"mrr", s.mrr},
              {"hits@1", s.hits1},
              {"hits@3", s.hits3},
              {"hits@10", s.hits10},
              {"easy_answers", s.easy_answers},
              {"easy_value_one", s.easy_exact_one},
              {"easy_hits@1", s.easy_hits1},
              {"max_support", s.max_support}};
    if (s.ms_per_query) j["ms_per_query"] = *s.ms_per_query;
    per[s.structure] = std::move(j);
  }
  json out = {{"metadata", metadata},
              {"avg_p", averages_json(avg_p)},
              {"avg_ood", averages_json(avg_ood)},
              {"avg_n", averages_json(avg_n)},
              {"structures", std::move(per)}};
  if (!interpretation.empty()) {
    json ij = json::object();
    for (const auto& im : interpretation) {
      json row = json::object();
      for (std::size_t k = 0; k < 4; ++k) {
        row[kInterpHeaders[k]] = opt(im.accuracy[k]);
        row[std::string("count_") + kInterpHeaders[k]] = im.counted[k];
      }
      ij[im.structure] = std::move(row);
    }
    out["interpretation"] = std::move(ij);
  }
  if (cardinality) {
    json per_s = json::object();
    for (const auto& [name, v] : cardinality->per_structure) per_s[name] = v;
    out["cardinality"] = {{"threshold", cardinality->threshold},
                          {"valid_mape", cardinality->valid_mape},
                          {"test_mape", cardinality->test_mape},
                          {"structures", std::move(per_s)}};
  }
  return out;
}

std::string EvalReport::to_text() const {
  std::vector<std::string> header{"metric", "avg_p", "avg_ood", "avg_n"};
  for (const auto& s : structures) header.push_back(s.structure);
  auto metric_row = [&](const std::string& label, auto avg_field, auto struct_field) {
    std::vector<std::string> row{label, cell(avg_p.*avg_field), cell(avg_ood.*avg_field), cell(avg_n.*avg_field)};
    for (const auto& s : structures) row.push_back(cell(s.*struct_field));
    return row;
  };
  std::vector<std::vector<std::string>> rows{
      metric_row("MRR", &Averages::mrr, &StructureMetrics::mrr),
      metric_row("Hits@1", &Averages::hits1, &StructureMetrics::hits1),
      metric_row("Hits@3", &Averages::hits3, &StructureMetrics::hits3),
      metric_row("Hits@10", &Averages::hits10, &StructureMetrics::hits10),
  };
  auto plain_row = [&](const std::string& label, auto value) {
    std::vector<std::string> row{label, "", "", ""};
    for (const auto& s : structures) row.push_back(value(s));
    return row;
  };
  rows.push_back(plain_row("easy Hits@1", [](const StructureMetrics& s) { return cell(s.easy_hits1); }));
  rows.push_back(plain_row("queries", [](const StructureMetrics& s) { return std::to_string(s.queries); }));
  if (std::any_of(structures.begin(), structures.end(), [](const auto& s) { return s.ms_per_query.has_value(); }))
    rows.push_back(plain_row("ms/query", [](const StructureMetrics& s) { return cell(s.ms_per_query); }));

  std::ostringstream out;
  out << render_table(header, rows);
  if (!interpretation.empty()) {
    std::vector<std::string> ih{"interpretation"};
    for (const auto& im : interpretation) ih.push_back(im.structure);
    std::vector<std::vector<std::string>> irows;
    for (std::size_t k = 0; k < 4; ++k) {
      std::vector<std::string> row{kInterpHeaders[k]};
      for (const auto& im : interpretation) row.push_back(cell(im.accuracy[k]));
      irows.push_back(std::move(row));
    }
    out << '\n' << render_table(ih, irows);
  }
  if (cardinality) {
    std::vector<std::string> ch{"cardinality", "threshold", "valid MAPE", "test MAPE"};
    out << '\n'
        << render_table(ch, {{"all", cell(cardinality->threshold), cell(cardinality->valid_mape),
                              cell(cardinality->test_mape)}});
  }
  return out.str();
}

}  // namespace qto
