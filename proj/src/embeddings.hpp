#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "common.hpp"

namespace qto {

/// Raw ComplEx embedding tables as stored in a QTOE file.
class EmbeddingTable {
 public:
  using Complex = std::complex<double>;

  EmbeddingTable() = default;
  EmbeddingTable(std::size_t num_entities, std::size_t num_relations, std::size_t dim);

  std::size_t num_entities() const { return num_entities_; }
  std::size_t num_relations() const { return num_relations_; }
  std::size_t dim() const { return dim_; }

  std::span<Complex> entity(std::size_t e) { return {entities_.data() + e * dim_, dim_}; }
  std::span<const Complex> entity(std::size_t e) const { return {entities_.data() + e * dim_, dim_}; }
  std::span<Complex> relation(std::size_t r) { return {relations_.data() + r * dim_, dim_}; }
  std::span<const Complex> relation(std::size_t r) const { return {relations_.data() + r * dim_, dim_}; }

  /// Re(sum_k r_k * h_k * conj(t_k)) with r taken from relation row `r_row`.
  double score(std::size_t h, std::size_t r_row, std::size_t t) const;

  void save(const std::string& path) const;
  static EmbeddingTable load(const std::string& path);

  friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;

 private:
  std::size_t num_entities_ = 0;
  std::size_t num_relations_ = 0;
  std::size_t dim_ = 0;
  std::vector<Complex> entities_;
  std::vector<Complex> relations_;
};

/// Trilinear ComplEx form on raw vectors; the sizes must agree.
double complex_score(std::span<const std::complex<double>> head, std::span<const std::complex<double>> relation,
                     std::span<const std::complex<double>> tail);

}  // namespace qto
