#pragma once

// Data-parallel inner loops behind the dense and sparse operations.
//
// Every kernel has a scalar reference implementation and, on x86-64, an AVX2
// variant. The variant is chosen once at runtime from CPUID (override with
// FMP_SIMD=scalar|avx2|auto). Variants accumulate in the same order as the
// scalar reference and never fuse multiply-add, so every kernel except the
// softmax exponential is bitwise identical across variants. The vector
// exponential is accurate to a few ulp.
//
// This header is also compiled into the AVX2 translation unit, so it must
// stay free of anything that instantiates inline library code.

#include <cstddef>
#include <cstdint>

namespace fmp::simd {

enum class Isa { scalar, avx2 };

// Compressed sparse rows; column indices sorted within each row.
struct CsrView {
  const std::int32_t* row_ptr;
  const std::int32_t* col;
  const double* val;
  std::size_t rows;
};

struct KernelTable {
  Isa isa;
  const char* name;

  // out = a·x + b·y
  void (*axpby)(std::size_t n, double a, const double* x, double b, const double* y, double* out);
  // out = c·x
  void (*scale)(std::size_t n, double c, const double* x, double* out);
  // out = x ⊙ y
  void (*mul)(std::size_t n, const double* x, const double* y, double* out);
  // out = max(x, 0)
  void (*relu)(std::size_t n, const double* x, double* out);
  // out = g where x > 0, else 0
  void (*relu_backward)(std::size_t n, const double* x, const double* g, double* out);
  // out (rows×d) = A·x (x is cols×d)
  void (*spmm)(const CsrView& a, std::size_t d, const double* x, double* out);
  // c (m×n) = a (m×k) · b (k×n)
  void (*gemm)(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
               double* c);
  // c (m×n) = aᵀ · b with a (k×m), b (k×n)
  void (*gemm_tn)(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
                  double* c);
  // c (m×n) = a · bᵀ with a (m×k), b (n×k)
  void (*gemm_nt)(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
                  double* c);
  // Row-wise softmax with row-max shift.
  void (*row_softmax)(std::size_t rows, std::size_t cols, const double* x, double* out);
  // Softmax-space fairness gradient given row probabilities:
  //   out_ij = (delta_i·u_j)·prob_ij − (Σ_k (delta_i·u_k)·prob_ik)·prob_ij
  void (*fairness_grad)(std::size_t rows, std::size_t cols, const double* prob,
                        const double* delta, const double* u, double* out);
};

const KernelTable& scalar_kernels();
// nullptr when the variant was not compiled in.
const KernelTable* avx2_kernels();

bool cpu_supports(Isa isa);

// The table used by the library. Resolved on first call.
const KernelTable& active_kernels();
// Forces a variant; throws fmp::Error if it is unavailable on this machine.
void select_kernels(Isa isa);
const char* isa_name(Isa isa);

}  // namespace fmp::simd
