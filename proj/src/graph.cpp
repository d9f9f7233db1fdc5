#include "fmp/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fmp/error.hpp"

namespace fmp {

SparseGraph build_graph(std::size_t n, std::span<const Edge> edges) {
  require(n > 0, ErrorCode::invalid_argument, "graph needs at least one node");
  require(n < static_cast<std::size_t>(std::numeric_limits<std::int32_t>::max()),
          ErrorCode::out_of_range, "node count exceeds 32-bit index range");

  SparseGraph g;
  g.edges_.reserve(edges.size());
  for (auto [a, b] : edges) {
    require(a < n && b < n, ErrorCode::out_of_range,
            "edge (" + std::to_string(a) + ", " + std::to_string(b) + ") outside [0, " +
                std::to_string(n) + ")");
    require(a != b, ErrorCode::invalid_argument,
            "self-loop on node " + std::to_string(a) + " in input");
    g.edges_.emplace_back(std::min(a, b), std::max(a, b));
  }
  std::sort(g.edges_.begin(), g.edges_.end());
  g.edges_.erase(std::unique(g.edges_.begin(), g.edges_.end()), g.edges_.end());

  g.degrees_.assign(n, 0);
  for (auto [a, b] : g.edges_) {
    ++g.degrees_[a];
    ++g.degrees_[b];
  }

  g.row_ptr_.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i)
    g.row_ptr_[i + 1] = g.row_ptr_[i] + static_cast<std::int32_t>(g.degrees_[i] + 1);

  const std::size_t nnz = static_cast<std::size_t>(g.row_ptr_[n]);
  g.col_.assign(nnz, 0);
  std::vector<std::int32_t> cursor(g.row_ptr_.begin(), g.row_ptr_.end() - 1);
  for (std::size_t i = 0; i < n; ++i) g.col_[cursor[i]++] = static_cast<std::int32_t>(i);
  for (auto [a, b] : g.edges_) {
    g.col_[cursor[a]++] = static_cast<std::int32_t>(b);
    g.col_[cursor[b]++] = static_cast<std::int32_t>(a);
  }

  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i)
    inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(g.degrees_[i] + 1));

  g.val_.assign(nnz, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto begin = g.col_.begin() + g.row_ptr_[i];
    auto end = g.col_.begin() + g.row_ptr_[i + 1];
    std::sort(begin, end);
    for (auto p = static_cast<std::size_t>(g.row_ptr_[i]);
         p < static_cast<std::size_t>(g.row_ptr_[i + 1]); ++p) {
      // Evaluated as 1/√((d_i+1)(d_j+1)) so (i,j) and (j,i) are bitwise equal.
      const std::size_t j = static_cast<std::size_t>(g.col_[p]);
      g.val_[p] = 1.0 / std::sqrt(static_cast<double>(g.degrees_[i] + 1) *
                                  static_cast<double>(g.degrees_[j] + 1));
    }
  }
  return g;
}

double SparseGraph::normalized(std::size_t i, std::size_t j) const {
  require(i < num_nodes() && j < num_nodes(), ErrorCode::out_of_range, "Ã index out of range");
  auto begin = col_.begin() + row_ptr_[i];
  auto end = col_.begin() + row_ptr_[i + 1];
  auto it = std::lower_bound(begin, end, static_cast<std::int32_t>(j));
  if (it == end || *it != static_cast<std::int32_t>(j)) return 0.0;
  return val_[static_cast<std::size_t>(it - col_.begin())];
}

Matrix SparseGraph::dense_normalized() const {
  const std::size_t n = num_nodes();
  Matrix dense(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (auto p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p)
      dense(i, static_cast<std::size_t>(col_[p])) = val_[p];
  return dense;
}

SparseGraph cycle_graph(std::size_t n) {
  require(n >= 3, ErrorCode::invalid_argument, "cycle needs at least three nodes");
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) edges.emplace_back(i, (i + 1) % n);
  return build_graph(n, edges);
}

SparseGraph path_graph(std::size_t n) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
  return build_graph(n, edges);
}

IncidentVector incident_vector(std::span<const int> sensitive) {
  IncidentVector delta;
  for (int s : sensitive) {
    require(s == 1 || s == -1, ErrorCode::invalid_argument,
            "sensitive values must be +1 or -1, got " + std::to_string(s));
    (s == 1 ? delta.positive_count : delta.negative_count) += 1;
  }
  require(delta.positive_count > 0 && delta.negative_count > 0, ErrorCode::empty_group,
          "incident vector undefined: a sensitive group is empty");
  const double pos = 1.0 / static_cast<double>(delta.positive_count);
  const double neg = -1.0 / static_cast<double>(delta.negative_count);
  delta.values.reserve(sensitive.size());
  for (int s : sensitive) delta.values.push_back(s == 1 ? pos : neg);
  return delta;
}

Matrix spmm(const SparseGraph& g, const Matrix& x) {
  require(x.rows() == g.num_nodes(), ErrorCode::dimension_mismatch,
          "spmm: graph has " + std::to_string(g.num_nodes()) + " nodes, features " +
              x.shape_string());
  Matrix out(x.rows(), x.cols());
  simd::active_kernels().spmm(g.csr(), x.cols(), x.data(), out.data());
  return out;
}

double smoothness_energy(const SparseGraph& g, const Matrix& f) {
  const Matrix af = spmm(g, f);
  double energy = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) energy += f.data()[k] * (f.data()[k] - af.data()[k]);
  return energy;
}

double smoothness_energy_edges(const SparseGraph& g, const Matrix& f) {
  require(f.rows() == g.num_nodes(), ErrorCode::dimension_mismatch,
          "smoothness_energy_edges: row count mismatch");
  const auto deg = g.degrees();
  double energy = 0.0;
  for (auto [i, j] : g.edges()) {
    const double si = 1.0 / std::sqrt(static_cast<double>(deg[i] + 1));
    const double sj = 1.0 / std::sqrt(static_cast<double>(deg[j] + 1));
    for (std::size_t c = 0; c < f.cols(); ++c) {
      const double diff = f(i, c) * si - f(j, c) * sj;
      energy += diff * diff;
    }
  }
  return energy;
}

double edge_homophily(const SparseGraph& g, std::span<const int> values) {
  require(values.size() == g.num_nodes(), ErrorCode::dimension_mismatch,
          "edge_homophily: value vector length mismatch");
  if (g.num_edges() == 0) return 0.0;
  std::size_t same = 0;
  for (auto [i, j] : g.edges()) same += values[i] == values[j] ? 1 : 0;
  return static_cast<double>(same) / static_cast<double>(g.num_edges());
}

}  // namespace fmp
