#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "fmp/matrix.hpp"
#include "fmp/simd/kernels.hpp"

namespace fmp {

using Edge = std::pair<std::size_t, std::size_t>;

// Undirected graph carrying the self-loop augmented, symmetrically
// normalized adjacency Ã = D̂^{-1/2}(A + I)D̂^{-1/2}, D̂ = diag(d_i + 1).
// Immutable once built.
class SparseGraph {
 public:
  std::size_t num_nodes() const noexcept { return degrees_.size(); }
  std::size_t num_edges() const noexcept { return edges_.size(); }

  // Unique undirected edges, each stored once as (i, j) with i < j, sorted.
  std::span<const Edge> edges() const noexcept { return edges_; }
  // Degree excluding the self-loop.
  std::span<const std::size_t> degrees() const noexcept { return degrees_; }

  std::span<const std::int32_t> row_ptr() const noexcept { return row_ptr_; }
  std::span<const std::int32_t> col_index() const noexcept { return col_; }
  std::span<const double> values() const noexcept { return val_; }

  simd::CsrView csr() const noexcept {
    return {row_ptr_.data(), col_.data(), val_.data(), num_nodes()};
  }

  // Entry Ã(i, j); zero when (i, j) is not stored.
  double normalized(std::size_t i, std::size_t j) const;
  Matrix dense_normalized() const;

  friend SparseGraph build_graph(std::size_t n, std::span<const Edge> edges);

 private:
  std::vector<Edge> edges_;
  std::vector<std::size_t> degrees_;
  std::vector<std::int32_t> row_ptr_;
  std::vector<std::int32_t> col_;
  std::vector<double> val_;
};

// Deduplicates and symmetrizes; pairs may appear in either orientation.
// Throws on n = 0, out-of-range indices, or self-loops in the input.
SparseGraph build_graph(std::size_t n, std::span<const Edge> edges);

SparseGraph cycle_graph(std::size_t n);
SparseGraph path_graph(std::size_t n);

// Signed group-normalized sensitive attribute vector:
// +1/|{s=+1}| on the positive group, −1/|{s=−1}| on the negative group.
struct IncidentVector {
  std::vector<double> values;
  std::size_t positive_count = 0;
  std::size_t negative_count = 0;

  std::size_t size() const noexcept { return values.size(); }
  Matrix as_row() const { return Matrix::row_vector(values); }
  Matrix as_column() const { return Matrix::column_vector(values); }
};

// Throws ErrorCode::empty_group when one side is empty and
// ErrorCode::invalid_argument on entries other than ±1.
IncidentVector incident_vector(std::span<const int> sensitive);

// Ã·X. Each output row accumulates its neighbors in column order, so the
// result does not depend on the kernel variant.
Matrix spmm(const SparseGraph& g, const Matrix& x);

// tr(Fᵀ(I − Ã)F).
double smoothness_energy(const SparseGraph& g, const Matrix& f);

// Σ_{(i,j)∈E} ‖F_i/√(d_i+1) − F_j/√(d_j+1)‖². Equal to the trace form for
// every graph: each node collects d_i/(d_i+1)·‖F_i‖² from its edges, which is
// exactly the diagonal of I − Ã.
double smoothness_energy_edges(const SparseGraph& g, const Matrix& f);

// Fraction of undirected edges whose endpoints share a value. 0 for an
// edgeless graph.
double edge_homophily(const SparseGraph& g, std::span<const int> values);

}  // namespace fmp
