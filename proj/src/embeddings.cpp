#include "embeddings.hpp"

#include <cstring>
#include <fstream>

#include "binary_io.hpp"

namespace qto {

namespace {
constexpr char kMagic[4] = {'Q', 'T', 'O', 'E'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

EmbeddingTable::EmbeddingTable(std::size_t num_entities, std::size_t num_relations, std::size_t dim)
    : num_entities_(num_entities),
      num_relations_(num_relations),
      dim_(dim),
      entities_(num_entities * dim),
      relations_(num_relations * dim) {}

double complex_score(std::span<const std::complex<double>> head, std::span<const std::complex<double>> relation,
                     std::span<const std::complex<double>> tail) {
  if (head.size() != relation.size() || head.size() != tail.size())
    fail(ErrorCode::kInvalidArgument, "complex_score: embedding dimension mismatch (" + std::to_string(head.size()) +
                                          ", " + std::to_string(relation.size()) + ", " +
                                          std::to_string(tail.size()) + ")");
  double s = 0.0;
  for (std::size_t k = 0; k < head.size(); ++k) s += (relation[k] * head[k] * std::conj(tail[k])).real();
  return s;
}

double EmbeddingTable::score(std::size_t h, std::size_t r_row, std::size_t t) const {
  if (h >= num_entities_ || t >= num_entities_ || r_row >= num_relations_)
    fail(ErrorCode::kInvalidArgument, "embedding score: id out of range");
  return complex_score(entity(h), relation(r_row), entity(t));
}

void EmbeddingTable::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write '" + path + "'");
  out.write(kMagic, 4);
  io::put_u32(out, kVersion);
  io::put_u64(out, num_entities_);
  io::put_u64(out, num_relations_);
  io::put_u64(out, dim_);
  for (const auto& z : entities_) {
    io::put_f64(out, z.real());
    io::put_f64(out, z.imag());
  }
  for (const auto& z : relations_) {
    io::put_f64(out, z.real());
    io::put_f64(out, z.imag());
  }
  if (!out) fail(ErrorCode::kIo, "write failed for '" + path + "'");
}

EmbeddingTable EmbeddingTable::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open '" + path + "'");
  io::Reader rd(in, path);
  char magic[4];
  rd.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) fail(ErrorCode::kFormat, path + ": not a QTOE file");
  const auto version = rd.u32("version");
  if (version != kVersion) fail(ErrorCode::kFormat, path + ": unsupported QTOE version " + std::to_string(version));
  const auto nv = rd.u64("entity count");
  const auto nr = rd.u64("relation count");
  const auto d = rd.u64("dimension");
  constexpr std::uint64_t kLimit = 1ULL << 34;
  if (nv * d > kLimit || nr * d > kLimit) fail(ErrorCode::kFormat, path + ": implausible QTOE header");
  EmbeddingTable table(nv, nr, d);
  for (auto& z : table.entities_) {
    const double re = rd.f64("entity block");
    z = {re, rd.f64("entity block")};
  }
  for (auto& z : table.relations_) {
    const double re = rd.f64("relation block");
    z = {re, rd.f64("relation block")};
  }
  if (!rd.at_end()) fail(ErrorCode::kFormat, path + ": trailing bytes after QTOE body");
  return table;
}

}  // namespace qto
