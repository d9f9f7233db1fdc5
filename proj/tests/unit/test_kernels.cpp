#include <cmath>
#include <vector>

#include "doctest.h"
#include "fmp/graph.hpp"
#include "fmp/matrix.hpp"
#include "fmp/rng.hpp"
#include "fmp/simd/kernels.hpp"
#include "oracle/oracle.hpp"

using fmp::simd::KernelTable;

namespace {

const KernelTable* vector_table() {
  const KernelTable* t = fmp::simd::avx2_kernels();
  return t != nullptr && fmp::simd::cpu_supports(fmp::simd::Isa::avx2) ? t : nullptr;
}

std::vector<double> random_values(fmp::Rng& rng, std::size_t n, double zero_fraction = 0.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.bernoulli(zero_fraction) ? 0.0 : 3.0 * rng.normal();
  return v;
}

// Equal up to the sign of zero.
void check_identical(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("elementwise kernels match the scalar reference bitwise") {
  const KernelTable* v = vector_table();
  if (v == nullptr) {
    MESSAGE("AVX2 unavailable; equivalence not exercised");
    return;
  }
  const KernelTable& s = fmp::simd::scalar_kernels();
  fmp::Rng rng(11);
  for (std::size_t n = 0; n < 70; ++n) {
    const auto x = random_values(rng, n, 0.2);
    const auto y = random_values(rng, n, 0.2);
    std::vector<double> a(n), b(n);
    s.axpby(n, 0.3, x.data(), -1.7, y.data(), a.data());
    v->axpby(n, 0.3, x.data(), -1.7, y.data(), b.data());
    check_identical(a, b);
    s.scale(n, -2.5, x.data(), a.data());
    v->scale(n, -2.5, x.data(), b.data());
    check_identical(a, b);
    s.mul(n, x.data(), y.data(), a.data());
    v->mul(n, x.data(), y.data(), b.data());
    check_identical(a, b);
    s.relu(n, x.data(), a.data());
    v->relu(n, x.data(), b.data());
    check_identical(a, b);
    s.relu_backward(n, x.data(), y.data(), a.data());
    v->relu_backward(n, x.data(), y.data(), b.data());
    check_identical(a, b);
  }
}

TEST_CASE("dense products match the scalar reference bitwise") {
  const KernelTable* v = vector_table();
  if (v == nullptr) return;
  const KernelTable& s = fmp::simd::scalar_kernels();
  fmp::Rng rng(12);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t m = 1 + rng.below(40), k = 1 + rng.below(40), n = 1 + rng.below(40);
    const auto a = random_values(rng, m * k, 0.1);
    const auto b = random_values(rng, k * n, 0.1);
    const auto at = random_values(rng, k * m);
    const auto bt = random_values(rng, n * k);
    std::vector<double> c1(m * n), c2(m * n);
    s.gemm(m, k, n, a.data(), b.data(), c1.data());
    v->gemm(m, k, n, a.data(), b.data(), c2.data());
    check_identical(c1, c2);
    s.gemm_tn(m, k, n, at.data(), b.data(), c1.data());
    v->gemm_tn(m, k, n, at.data(), b.data(), c2.data());
    check_identical(c1, c2);
    s.gemm_nt(m, k, n, a.data(), bt.data(), c1.data());
    v->gemm_nt(m, k, n, a.data(), bt.data(), c2.data());
    check_identical(c1, c2);
  }
}

TEST_CASE("sparse product matches the scalar reference bitwise") {
  const KernelTable* v = vector_table();
  if (v == nullptr) return;
  const KernelTable& s = fmp::simd::scalar_kernels();
  fmp::Rng rng(13);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 2 + rng.below(60);
    const auto edges = oracle::random_edges(rng, n, 0.15);
    const fmp::SparseGraph g = fmp::build_graph(n, edges);
    for (std::size_t d : {1u, 2u, 3u, 4u, 5u, 8u, 9u, 16u}) {
      const auto x = random_values(rng, n * d);
      std::vector<double> a(n * d), b(n * d);
      s.spmm(g.csr(), d, x.data(), a.data());
      v->spmm(g.csr(), d, x.data(), b.data());
      check_identical(a, b);
    }
  }
}

TEST_CASE("fairness gradient kernel matches the scalar reference bitwise") {
  const KernelTable* v = vector_table();
  if (v == nullptr) return;
  const KernelTable& s = fmp::simd::scalar_kernels();
  fmp::Rng rng(14);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t rows = 1 + rng.below(50), cols = 1 + rng.below(7);
    std::vector<double> prob(rows * cols);
    s.row_softmax(rows, cols, random_values(rng, rows * cols).data(), prob.data());
    const auto delta = random_values(rng, rows);
    const auto u = random_values(rng, cols);
    std::vector<double> a(rows * cols), b(rows * cols);
    s.fairness_grad(rows, cols, prob.data(), delta.data(), u.data(), a.data());
    v->fairness_grad(rows, cols, prob.data(), delta.data(), u.data(), b.data());
    check_identical(a, b);
  }
}

TEST_CASE("vector softmax agrees with the scalar reference to a few ulp") {
  const KernelTable* v = vector_table();
  if (v == nullptr) return;
  const KernelTable& s = fmp::simd::scalar_kernels();
  fmp::Rng rng(15);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t rows = 1 + rng.below(30), cols = 1 + rng.below(12);
    auto x = random_values(rng, rows * cols);
    for (double& e : x) e *= 10.0;
    std::vector<double> a(rows * cols), b(rows * cols);
    s.row_softmax(rows, cols, x.data(), a.data());
    v->row_softmax(rows, cols, x.data(), b.data());
    for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(std::abs(a[i] - b[i]) <= 1e-15 + 4e-15 * std::abs(a[i]));
  }
}

TEST_CASE("forced variant selection routes library calls") {
  const fmp::Matrix a = fmp::Matrix::from_rows({{1, 2}, {3, 4}});
  fmp::simd::select_kernels(fmp::simd::Isa::scalar);
  CHECK(fmp::simd::active_kernels().isa == fmp::simd::Isa::scalar);
  const fmp::Matrix s = fmp::matmul(a, a);
  if (vector_table() != nullptr) {
    fmp::simd::select_kernels(fmp::simd::Isa::avx2);
    CHECK(fmp::simd::active_kernels().isa == fmp::simd::Isa::avx2);
    CHECK(fmp::matmul(a, a) == s);
  }
  CHECK(s == fmp::Matrix::from_rows({{7, 10}, {15, 22}}));
  fmp::simd::select_kernels(fmp::simd::Isa::scalar);
  fmp::simd::select_kernels(vector_table() != nullptr ? fmp::simd::Isa::avx2 : fmp::simd::Isa::scalar);
}

}  // TEST_SUITE
