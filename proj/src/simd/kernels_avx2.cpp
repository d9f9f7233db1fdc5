// AVX2 variants. Compiled with -mavx2 only (no FMA) so products and sums
// round exactly like the scalar reference.

#include <immintrin.h>

#include "fmp/simd/kernels.hpp"

namespace fmp::simd {
namespace {

// Cephes-style exp: range reduction by ln 2 and a (2,3) Padé approximant.
inline __m256d exp_pd(__m256d x) {
  const __m256d lo = _mm256_set1_pd(-708.39641853226408);
  const __m256d hi = _mm256_set1_pd(709.0);
  const __m256d underflow = _mm256_cmp_pd(x, lo, _CMP_LT_OQ);
  // Operand order keeps NaN lanes NaN.
  x = _mm256_min_pd(hi, _mm256_max_pd(lo, x));

  __m256d fx = _mm256_add_pd(_mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634073599)),
                             _mm256_set1_pd(0.5));
  fx = _mm256_round_pd(fx, _MM_FROUND_TO_NEG_INF | _MM_FROUND_NO_EXC);
  x = _mm256_sub_pd(x, _mm256_mul_pd(fx, _mm256_set1_pd(6.93145751953125E-1)));
  x = _mm256_sub_pd(x, _mm256_mul_pd(fx, _mm256_set1_pd(1.42860682030941723212E-6)));

  const __m256d xx = _mm256_mul_pd(x, x);
  __m256d p = _mm256_set1_pd(1.26177193074810590878E-4);
  p = _mm256_add_pd(_mm256_mul_pd(p, xx), _mm256_set1_pd(3.02994407707441961300E-2));
  p = _mm256_add_pd(_mm256_mul_pd(p, xx), _mm256_set1_pd(9.99999999999999999910E-1));
  p = _mm256_mul_pd(p, x);
  __m256d q = _mm256_set1_pd(3.00198505138664455042E-6);
  q = _mm256_add_pd(_mm256_mul_pd(q, xx), _mm256_set1_pd(2.52448340349684104192E-3));
  q = _mm256_add_pd(_mm256_mul_pd(q, xx), _mm256_set1_pd(2.27265548208155028766E-1));
  q = _mm256_add_pd(_mm256_mul_pd(q, xx), _mm256_set1_pd(2.00000000000000000009E0));
  x = _mm256_div_pd(p, _mm256_sub_pd(q, p));
  x = _mm256_add_pd(_mm256_set1_pd(1.0), _mm256_add_pd(x, x));

  // 2^fx assembled directly in the exponent field.
  const __m128i n32 = _mm256_cvtpd_epi32(fx);
  __m256i n64 = _mm256_cvtepi32_epi64(n32);
  n64 = _mm256_add_epi64(n64, _mm256_set1_epi64x(1023));
  n64 = _mm256_slli_epi64(n64, 52);
  x = _mm256_mul_pd(x, _mm256_castsi256_pd(n64));
  return _mm256_blendv_pd(x, _mm256_setzero_pd(), underflow);
}

inline __m256i tail_mask(std::size_t remaining) {
  const __m256i lanes = _mm256_set_epi64x(3, 2, 1, 0);
  return _mm256_cmpgt_epi64(_mm256_set1_epi64x(static_cast<long long>(remaining)), lanes);
}

void axpby(std::size_t n, double a, const double* x, double b, const double* y, double* out) {
  const __m256d va = _mm256_set1_pd(a);
  const __m256d vb = _mm256_set1_pd(b);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d r = _mm256_add_pd(_mm256_mul_pd(va, _mm256_loadu_pd(x + i)),
                                    _mm256_mul_pd(vb, _mm256_loadu_pd(y + i)));
    _mm256_storeu_pd(out + i, r);
  }
  for (; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void scale(std::size_t n, double c, const double* x, double* out) {
  const __m256d vc = _mm256_set1_pd(c);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, _mm256_mul_pd(vc, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = c * x[i];
}

void mul(std::size_t n, const double* x, const double* y, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

void relu(std::size_t n, const double* x, double* out) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    _mm256_storeu_pd(out + i, _mm256_and_pd(v, _mm256_cmp_pd(v, zero, _CMP_GT_OQ)));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(std::size_t n, const double* x, const double* g, double* out) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d pos = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    _mm256_storeu_pd(out + i, _mm256_and_pd(_mm256_loadu_pd(g + i), pos));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? g[i] : 0.0;
}

void spmm(const CsrView& a, std::size_t d, const double* x, double* out) {
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* dst = out + i * d;
    const std::int32_t begin = a.row_ptr[i];
    const std::int32_t end = a.row_ptr[i + 1];
    if (d == 2) {
      __m128d acc = _mm_setzero_pd();
      for (std::int32_t p = begin; p < end; ++p) {
        const __m128d v = _mm_set1_pd(a.val[p]);
        acc = _mm_add_pd(acc, _mm_mul_pd(v, _mm_loadu_pd(x + static_cast<std::size_t>(a.col[p]) * 2)));
      }
      _mm_storeu_pd(dst, acc);
      continue;
    }
    std::size_t j = 0;
    for (; j + 4 <= d; j += 4) {
      __m256d acc = _mm256_setzero_pd();
      for (std::int32_t p = begin; p < end; ++p) {
        const __m256d v = _mm256_set1_pd(a.val[p]);
        const double* src = x + static_cast<std::size_t>(a.col[p]) * d + j;
        acc = _mm256_add_pd(acc, _mm256_mul_pd(v, _mm256_loadu_pd(src)));
      }
      _mm256_storeu_pd(dst + j, acc);
    }
    for (; j < d; ++j) {
      double acc = 0.0;
      for (std::int32_t p = begin; p < end; ++p)
        acc += a.val[p] * x[static_cast<std::size_t>(a.col[p]) * d + j];
      dst[j] = acc;
    }
  }
}

// c_ij = Σ_l a(i,l)·b(l,j) in increasing l, where a(i,l) = a[i*lda_i + l*lda_l].
inline void gemm_generic(std::size_t m, std::size_t k, std::size_t n, const double* a,
                         std::size_t a_row_stride, std::size_t a_col_stride, const double* b,
                         double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * a_row_stride;
    double* ci = c + i * n;
    std::size_t j = 0;
    for (; j + 16 <= n; j += 16) {
      __m256d c0 = _mm256_setzero_pd(), c1 = _mm256_setzero_pd();
      __m256d c2 = _mm256_setzero_pd(), c3 = _mm256_setzero_pd();
      for (std::size_t l = 0; l < k; ++l) {
        const __m256d av = _mm256_set1_pd(ai[l * a_col_stride]);
        const double* bl = b + l * n + j;
        c0 = _mm256_add_pd(c0, _mm256_mul_pd(av, _mm256_loadu_pd(bl)));
        c1 = _mm256_add_pd(c1, _mm256_mul_pd(av, _mm256_loadu_pd(bl + 4)));
        c2 = _mm256_add_pd(c2, _mm256_mul_pd(av, _mm256_loadu_pd(bl + 8)));
        c3 = _mm256_add_pd(c3, _mm256_mul_pd(av, _mm256_loadu_pd(bl + 12)));
      }
      _mm256_storeu_pd(ci + j, c0);
      _mm256_storeu_pd(ci + j + 4, c1);
      _mm256_storeu_pd(ci + j + 8, c2);
      _mm256_storeu_pd(ci + j + 12, c3);
    }
    for (; j + 4 <= n; j += 4) {
      __m256d acc = _mm256_setzero_pd();
      for (std::size_t l = 0; l < k; ++l)
        acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_set1_pd(ai[l * a_col_stride]),
                                               _mm256_loadu_pd(b + l * n + j)));
      _mm256_storeu_pd(ci + j, acc);
    }
    for (; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += ai[l * a_col_stride] * b[l * n + j];
      ci[j] = acc;
    }
  }
}

void gemm(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
          double* c) {
  gemm_generic(m, k, n, a, k, 1, b, c);
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  gemm_generic(m, k, n, a, 1, m, b, c);
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const double* b0 = b + j * k;
      __m256d acc = _mm256_setzero_pd();
      for (std::size_t l = 0; l < k; ++l) {
        const __m256d bv = _mm256_set_pd(b0[3 * k + l], b0[2 * k + l], b0[k + l], b0[l]);
        acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_set1_pd(ai[l]), bv));
      }
      _mm256_storeu_pd(c + i * n + j, acc);
    }
    for (; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += ai[l] * bj[l];
      c[i * n + j] = acc;
    }
  }
}

void exp_inplace(std::size_t n, double* x) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, exp_pd(_mm256_loadu_pd(x + i)));
  if (i < n) {
    const __m256i mask = tail_mask(n - i);
    _mm256_maskstore_pd(x + i, mask, exp_pd(_mm256_maskload_pd(x + i, mask)));
  }
}

void row_softmax(std::size_t rows, std::size_t cols, const double* x, double* out) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* xi = x + i * cols;
    double* yi = out + i * cols;
    double m = xi[0];
    for (std::size_t j = 1; j < cols; ++j) m = xi[j] > m ? xi[j] : m;
    for (std::size_t j = 0; j < cols; ++j) yi[j] = xi[j] - m;
  }
  exp_inplace(rows * cols, out);
  for (std::size_t i = 0; i < rows; ++i) {
    double* yi = out + i * cols;
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += yi[j];
    const __m256d vs = _mm256_set1_pd(s);
    std::size_t j = 0;
    for (; j + 4 <= cols; j += 4) _mm256_storeu_pd(yi + j, _mm256_div_pd(_mm256_loadu_pd(yi + j), vs));
    for (; j < cols; ++j) yi[j] = yi[j] / s;
  }
}

void fairness_grad(std::size_t rows, std::size_t cols, const double* prob, const double* delta,
                   const double* u, double* out) {
  std::size_t i = 0;
  if (cols == 2) {
    // Two rows per register: lanes (i,0) (i,1) (i+1,0) (i+1,1).
    const __m256d uv = _mm256_set_pd(u[1], u[0], u[1], u[0]);
    for (; i + 2 <= rows; i += 2) {
      const __m256d dv = _mm256_set_pd(delta[i + 1], delta[i + 1], delta[i], delta[i]);
      const __m256d y = _mm256_loadu_pd(prob + i * 2);
      const __m256d t = _mm256_mul_pd(_mm256_mul_pd(dv, uv), y);
      const __m256d s = _mm256_hadd_pd(t, t);
      _mm256_storeu_pd(out + i * 2, _mm256_sub_pd(t, _mm256_mul_pd(s, y)));
    }
  }
  for (; i < rows; ++i) {
    const double* yi = prob + i * cols;
    double* gi = out + i * cols;
    const __m256d dv = _mm256_set1_pd(delta[i]);
    std::size_t j = 0;
    for (; j + 4 <= cols; j += 4)
      _mm256_storeu_pd(gi + j, _mm256_mul_pd(_mm256_mul_pd(dv, _mm256_loadu_pd(u + j)),
                                             _mm256_loadu_pd(yi + j)));
    for (; j < cols; ++j) gi[j] = (delta[i] * u[j]) * yi[j];
    double s = 0.0;
    for (j = 0; j < cols; ++j) s += gi[j];
    const __m256d vs = _mm256_set1_pd(s);
    for (j = 0; j + 4 <= cols; j += 4)
      _mm256_storeu_pd(gi + j, _mm256_sub_pd(_mm256_loadu_pd(gi + j),
                                             _mm256_mul_pd(vs, _mm256_loadu_pd(yi + j))));
    for (; j < cols; ++j) gi[j] = gi[j] - s * yi[j];
  }
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const KernelTable table{
      Isa::avx2, "avx2", axpby, scale, mul, relu, relu_backward, spmm,
      gemm,      gemm_tn, gemm_nt, row_softmax, fairness_grad,
  };
  return &table;
}

}  // namespace fmp::simd
