#include <cmath>
#include <complex>
#include <set>

#include "embeddings.hpp"
#include "test_util.hpp"

using namespace qto;
using namespace qto::testing;
using C = std::complex<double>;

TEST(ComplexScore, Examples) {
  const std::vector<C> one{C(1, 0)}, i{C(0, 1)};
  EXPECT_DOUBLE_EQ(complex_score(one, one, one), 1.0);
  // Re(i * 1 * conj(i)) = Re(i * -i) = 1
  EXPECT_DOUBLE_EQ(complex_score(one, i, i), 1.0);
  const std::vector<C> h{C(0.3, 0), C(-1.2, 0)}, r{C(0.7, 0), C(2.0, 0)}, t{C(1.5, 0), C(0.1, 0)};
  EXPECT_DOUBLE_EQ(complex_score(h, r, t), complex_score(t, r, h));
  EXPECT_THROW(complex_score(h, r, one), Error);
}

TEST(Calibration, Examples) {
  const std::vector<double> s1{std::log(2.0), 0.0, 0.0};
  const auto c1 = calibrate_row(s1, 1);
  EXPECT_NEAR(c1[0], 0.5, 1e-15);
  EXPECT_NEAR(c1[1], 0.25, 1e-15);
  EXPECT_NEAR(c1[2], 0.25, 1e-15);
  const std::vector<double> flat(4, 3.7);
  for (double v : calibrate_row(flat, 1)) EXPECT_NEAR(v, 0.25, 1e-15);
  for (double v : calibrate_row(flat, 4)) EXPECT_NEAR(v, 1.0, 1e-15);
  EXPECT_THROW(calibrate_row(flat, 0), Error);
}

TEST(Calibration, RowMassAndMonotonicity) {
  Rng rng(3);
  for (int iter = 0; iter < 200; ++iter) {
    const std::size_t n = 1 + uniform_index(rng, 60);
    const std::size_t nt = 1 + uniform_index(rng, 5);
    std::vector<double> s(n);
    for (auto& x : s) x = uniform_real(rng, -30, 30);
    const auto c = calibrate_row(s, nt);
    double mass = 0;
    for (double v : c) mass += v;
    EXPECT_NEAR(mass, static_cast<double>(nt), 1e-9);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b)
        if (s[a] > s[b]) EXPECT_GE(c[a], c[b]);
  }
}

TEST(RoundFaithful, Examples) {
  EXPECT_EQ(round_faithful(0.3, true, 1e-4), 1.0);
  EXPECT_EQ(round_faithful(1.3, false, 1e-4), 1.0 - 1e-4);
  EXPECT_EQ(round_faithful(0.3, false, 1e-4), 0.3);
}

TEST(NegationView, Examples) {
  const auto m = make_matrix(2, 2, {{0, 0, 1, 0.4}, {1, 1, 0, 0.2}});
  const auto v1 = negation_view(m, RelationId(0), 1.0);
  EXPECT_EQ(v1.at(0, 1), 0.4);
  EXPECT_EQ(v1.at(1, 0), 0.0);
  EXPECT_EQ(negation_view(m, RelationId(0), 3.0).at(0, 1), 1.0);
  EXPECT_NEAR(negation_view(m, RelationId(1), 3.0).at(1, 0), 0.6, 1e-15);
  EXPECT_EQ(m.relation(RelationId(0)).at(0, 1), 0.4);  // underlying matrix unchanged
  EXPECT_THROW(negation_view(m, RelationId(0), 0.5), Error);
}

TEST(NegationScaling, Scope) {
  NegationScaling q{3.0, AlphaScope::kQuery}, a{3.0, AlphaScope::kNegatedAtoms};
  EXPECT_EQ(q.alpha_for(false, false), 1.0);
  EXPECT_EQ(q.alpha_for(true, false), 3.0);
  EXPECT_EQ(a.alpha_for(true, false), 1.0);
  EXPECT_EQ(a.alpha_for(true, true), 3.0);
  EXPECT_EQ(parse_alpha_scope("negated-atoms"), AlphaScope::kNegatedAtoms);
  EXPECT_THROW(parse_alpha_scope("all"), Error);
}

TEST(SparseMatrix, RejectsBadEntries) {
  const std::vector<MatrixEntry> unsorted{{1, 0, 0.5}, {0, 1, 0.5}};
  EXPECT_THROW(SparseRelationMatrix(2, unsorted), Error);
  const std::vector<MatrixEntry> zero{{0, 0, 0.0}};
  EXPECT_THROW(SparseRelationMatrix(2, zero), Error);
  const std::vector<MatrixEntry> range{{0, 2, 0.5}};
  EXPECT_THROW(SparseRelationMatrix(2, range), Error);
}

TEST(SparseMatrix, ColumnMirror) {
  Rng rng(5);
  const auto m = random_matrix(rng, 12, 1, 0.6, 0.1);
  const auto& s = m.relation(RelationId(0));
  std::size_t seen = 0;
  for (std::size_t j = 0; j < 12; ++j) {
    const auto rows = s.col_rows(j);
    const auto vals = s.col_values(j);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      EXPECT_EQ(s.at(rows[k], j), vals[k]);
      if (k > 0) EXPECT_LT(rows[k - 1], rows[k]);
    }
    seen += rows.size();
  }
  EXPECT_EQ(seen, s.nnz());
}

namespace {

KnowledgeGraph toy_graph() {
  Rng rng(17);
  return random_kg(rng, 20, 3, 0.08, 0.3);
}

EmbeddingTable random_table(Rng& rng, std::size_t nv, std::size_t nr, std::size_t d) {
  EmbeddingTable t(nv, nr, d);
  for (std::size_t e = 0; e < nv; ++e)
    for (auto& c : t.entity(e)) c = C(uniform_real(rng, -1, 1), uniform_real(rng, -1, 1));
  for (std::size_t r = 0; r < nr; ++r)
    for (auto& c : t.relation(r)) c = C(uniform_real(rng, -1, 1), uniform_real(rng, -1, 1));
  return t;
}

// Independent dense build: direct trilinear form, plain softmax, tail counts
// from the triple list.
std::vector<std::vector<double>> dense_reference(const KnowledgeGraph& kg, const EmbeddingTable& t, double eps,
                                                 double delta) {
  const std::size_t n = kg.num_entities(), nr = kg.num_relations();
  const bool forward_only = t.num_relations() * 2 == nr;
  std::set<Triple> train(kg.split(Split::kTrain).begin(), kg.split(Split::kTrain).end());
  std::vector<std::vector<double>> out(nr, std::vector<double>(n * n, 0.0));
  for (std::size_t r = 0; r < nr; ++r)
    for (std::size_t h = 0; h < n; ++h) {
      std::vector<double> f(n);
      for (std::size_t x = 0; x < n; ++x) {
        std::size_t hh = h, tt = x, rr = r;
        if (forward_only) {
          rr = r / 2;
          if (r % 2 == 1) std::swap(hh, tt);
        }
        C s = 0;
        for (std::size_t k = 0; k < t.dim(); ++k)
          s += t.relation(rr)[k] * t.entity(hh)[k] * std::conj(t.entity(tt)[k]);
        f[x] = s.real();
      }
      std::size_t nt = 0;
      for (std::size_t x = 0; x < n; ++x)
        nt += train.count({EntityId(static_cast<std::uint32_t>(h)), RelationId(static_cast<std::uint32_t>(r)),
                           EntityId(static_cast<std::uint32_t>(x))});
      nt = std::max<std::size_t>(nt, 1);
      double z = 0;
      for (double v : f) z += std::exp(v);
      for (std::size_t x = 0; x < n; ++x) {
        const bool edge = train.count({EntityId(static_cast<std::uint32_t>(h)),
                                       RelationId(static_cast<std::uint32_t>(r)),
                                       EntityId(static_cast<std::uint32_t>(x))}) == 1;
        double v = std::exp(f[x]) / z * static_cast<double>(nt);
        v = edge ? 1.0 : std::min(v, 1.0 - delta);
        if (!edge && v < eps) v = 0.0;
        out[r][h * n + x] = v;
      }
    }
  return out;
}

}  // namespace

TEST(BuildMatrix, EmbeddingMatchesDenseReference) {
  const auto kg = toy_graph();
  Rng rng(23);
  for (std::size_t nr : {kg.num_relations() / 2, kg.num_relations()}) {
    auto table = std::make_shared<EmbeddingTable>(random_table(rng, kg.num_entities(), nr, 4));
    for (double eps : {0.0, 0.05}) {
      const auto m = build_matrix(kg, EmbeddingScorer{table}, {eps, 1e-4, 2});
      const auto ref = dense_reference(kg, *table, eps, 1e-4);
      for (std::uint32_t r = 0; r < kg.num_relations(); ++r)
        for (std::size_t i = 0; i < kg.num_entities(); ++i)
          for (std::size_t j = 0; j < kg.num_entities(); ++j)
            ASSERT_NEAR(m.relation(RelationId(r)).at(i, j), ref[r][i * kg.num_entities() + j], 1e-12)
                << "r=" << r << " i=" << i << " j=" << j << " |R_emb|=" << nr;
    }
  }
}

TEST(BuildMatrix, AdjacencyDegeneratesToZeroOne) {
  const auto kg = toy_graph();
  for (auto g : {GraphSelector::kTrain, GraphSelector::kFull}) {
    const auto m = build_matrix(kg, AdjacencyScorer{g}, {});
    const auto& adj = kg.graph(g);
    EXPECT_EQ(m.nnz(), adj.num_edges());
    for (std::uint32_t r = 0; r < kg.num_relations(); ++r)
      for (std::uint32_t i = 0; i < kg.num_entities(); ++i)
        for (std::uint32_t j = 0; j < kg.num_entities(); ++j)
          EXPECT_EQ(m.relation(RelationId(r)).at(i, j),
                    adj.contains(EntityId(i), RelationId(r), EntityId(j)) ? 1.0 : 0.0);
  }
}

TEST(BuildMatrix, NoisyOracleContract) {
  const auto kg = toy_graph();
  for (double eps : {0.0, 0.001, 0.9}) {
    const auto m = build_matrix(kg, NoisyOracleScorer{0.5, 9, 8.0}, {eps, 1e-4, 3});
    const auto& train = kg.graph(GraphSelector::kTrain);
    for (std::uint32_t r = 0; r < kg.num_relations(); ++r) {
      const auto& s = m.relation(RelationId(r));
      for (std::uint32_t i = 0; i < kg.num_entities(); ++i) {
        const auto cols = s.row_cols(i);
        const auto vals = s.row_values(i);
        for (std::size_t k = 0; k < cols.size(); ++k) {
          EXPECT_TRUE(k == 0 || cols[k - 1] < cols[k]);
          if (train.contains(EntityId(i), RelationId(r), EntityId(cols[k]))) {
            EXPECT_EQ(vals[k], 1.0);
          } else {
            EXPECT_LE(vals[k], 1.0 - 1e-4);
            EXPECT_GE(vals[k], eps);
          }
        }
        for (EntityId t : train.tails(EntityId(i), RelationId(r))) EXPECT_EQ(s.at(i, t.index()), 1.0);
      }
    }
  }
  std::vector<double> row(kg.num_entities());
  score_row(NoisyOracleScorer{0.5, 9, 8.0}, kg, RelationId(0), EntityId(0), row);
  for (double v : row) EXPECT_LE(std::abs(v), 8.0);
}

TEST(BuildMatrix, DeterministicAcrossThreads) {
  const auto kg = toy_graph();
  const auto a = build_matrix(kg, NoisyOracleScorer{0.3, 1}, {0.0, 1e-4, 1});
  const auto b = build_matrix(kg, NoisyOracleScorer{0.3, 1}, {0.0, 1e-4, 4});
  EXPECT_TRUE(a == b);
  const auto c = build_matrix(kg, NoisyOracleScorer{0.3, 2}, {0.0, 1e-4, 4});
  EXPECT_FALSE(a == c);
}

TEST(BuildMatrix, OptionChecks) {
  const auto kg = toy_graph();
  EXPECT_THROW(build_matrix(kg, AdjacencyScorer{}, {1.0, 1e-4, 1}), Error);
  EXPECT_THROW(build_matrix(kg, AdjacencyScorer{}, {0.0, 0.5, 1}), Error);
  auto bad = std::make_shared<EmbeddingTable>(3, 1, 2);
  EXPECT_THROW(build_matrix(kg, EmbeddingScorer{bad}, {}), Error);
}

TEST(Qtom, RoundTripIsByteExact) {
  const auto dir = temp_dir();
  Rng rng(8);
  const auto m = random_matrix(rng, 17, 4, 0.7, 0.1);
  m.save((dir / "a.qtom").string());
  const auto back = NeuralAdjacency::load((dir / "a.qtom").string());
  EXPECT_TRUE(back == m);
  back.save((dir / "b.qtom").string());
  EXPECT_EQ(read_file(dir / "a.qtom"), read_file(dir / "b.qtom"));
}

TEST(Qtom, HeaderLayout) {
  const auto dir = temp_dir();
  const auto m = make_matrix(3, 2, {{0, 1, 2, 0.5}}, 1e-4);
  m.save((dir / "m.qtom").string());
  const auto bytes = read_file(dir / "m.qtom");
  // magic, version, |V|, |R|, delta, eps, nnz0, one record, nnz1
  ASSERT_EQ(bytes.size(), 4u + 4 + 8 + 8 + 8 + 8 + 8 + 16 + 8);
  EXPECT_EQ(bytes.substr(0, 4), "QTOM");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 3u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 2u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[40]), 1u);  // nnz of relation 0
  EXPECT_EQ(static_cast<unsigned char>(bytes[48]), 1u);  // row
  EXPECT_EQ(static_cast<unsigned char>(bytes[52]), 2u);  // col
}

TEST(Qtom, Errors) {
  const auto dir = temp_dir();
  write_file(dir / "bad.qtom", "XXXX\x01\0\0\0");
  try {
    NeuralAdjacency::load((dir / "bad.qtom").string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFormat);
    EXPECT_NE(std::string(e.what()).find("not a QTOM file"), std::string::npos);
  }
  const auto m = make_matrix(3, 2, {{0, 1, 2, 0.5}, {0, 2, 2, 0.25}});
  m.save((dir / "m.qtom").string());
  const auto bytes = read_file(dir / "m.qtom");
  write_file(dir / "short.qtom", bytes.substr(0, bytes.size() - 12));
  try {
    NeuralAdjacency::load((dir / "short.qtom").string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFormat);
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos) << e.what();
  }
  write_file(dir / "long.qtom", bytes + "x");
  EXPECT_THROW(NeuralAdjacency::load((dir / "long.qtom").string()), Error);
  EXPECT_THROW(NeuralAdjacency::load((dir / "missing.qtom").string()), Error);
}

TEST(Qtoe, RoundTripIsByteExact) {
  const auto dir = temp_dir();
  Rng rng(4);
  const auto t = random_table(rng, 7, 3, 5);
  t.save((dir / "a.qtoe").string());
  const auto back = EmbeddingTable::load((dir / "a.qtoe").string());
  EXPECT_TRUE(back == t);
  back.save((dir / "b.qtoe").string());
  const auto bytes = read_file(dir / "a.qtoe");
  EXPECT_EQ(bytes, read_file(dir / "b.qtoe"));
  EXPECT_EQ(bytes.size(), 4u + 4 + 24 + (7 + 3) * 5 * 16);
  EXPECT_EQ(bytes.substr(0, 4), "QTOE");
  write_file(dir / "c.qtoe", "QTOM" + bytes.substr(4));
  EXPECT_THROW(EmbeddingTable::load((dir / "c.qtoe").string()), Error);
  write_file(dir / "d.qtoe", bytes.substr(0, bytes.size() - 1));
  EXPECT_THROW(EmbeddingTable::load((dir / "d.qtoe").string()), Error);
}

TEST(Qtoe, IdentityEmbeddingsScoreDimension) {
  EmbeddingTable t(2, 1, 6);
  for (std::size_t e = 0; e < 2; ++e)
    for (auto& c : t.entity(e)) c = 1.0;
  for (auto& c : t.relation(0)) c = 1.0;
  EXPECT_DOUBLE_EQ(t.score(0, 0, 1), 6.0);
}
