#include <cmath>

#include "fmp/simd/kernels.hpp"

namespace fmp::simd {
namespace {

void axpby(std::size_t n, double a, const double* x, double b, const double* y, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void scale(std::size_t n, double c, const double* x, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = c * x[i];
}

void mul(std::size_t n, const double* x, const double* y, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

void relu(std::size_t n, const double* x, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(std::size_t n, const double* x, const double* g, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? g[i] : 0.0;
}

void spmm(const CsrView& a, std::size_t d, const double* x, double* out) {
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* dst = out + i * d;
    for (std::size_t j = 0; j < d; ++j) dst[j] = 0.0;
    for (std::int32_t p = a.row_ptr[i]; p < a.row_ptr[i + 1]; ++p) {
      const double v = a.val[p];
      const double* src = x + static_cast<std::size_t>(a.col[p]) * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += v * src[j];
    }
  }
}

void gemm(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
          double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
    for (std::size_t l = 0; l < k; ++l) {
      const double ail = a[i * k + l];
      const double* bl = b + l * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += ail * bl[j];
    }
  }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m * n; ++i) c[i] = 0.0;
  for (std::size_t l = 0; l < k; ++l) {
    const double* al = a + l * m;
    const double* bl = b + l * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double ali = al[i];
      double* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += ali * bl[j];
    }
  }
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += ai[l] * bj[l];
      c[i * n + j] = acc;
    }
  }
}

void row_softmax(std::size_t rows, std::size_t cols, const double* x, double* out) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* xi = x + i * cols;
    double* yi = out + i * cols;
    double m = xi[0];
    for (std::size_t j = 1; j < cols; ++j) m = xi[j] > m ? xi[j] : m;
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      yi[j] = std::exp(xi[j] - m);
      s += yi[j];
    }
    for (std::size_t j = 0; j < cols; ++j) yi[j] = yi[j] / s;
  }
}

void fairness_grad(std::size_t rows, std::size_t cols, const double* prob, const double* delta,
                   const double* u, double* out) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* yi = prob + i * cols;
    double* gi = out + i * cols;
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      gi[j] = (delta[i] * u[j]) * yi[j];
      s += gi[j];
    }
    for (std::size_t j = 0; j < cols; ++j) gi[j] = gi[j] - s * yi[j];
  }
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{
      Isa::scalar, "scalar", axpby, scale, mul, relu, relu_backward, spmm,
      gemm,        gemm_tn,  gemm_nt, row_softmax, fairness_grad,
  };
  return table;
}

}  // namespace fmp::simd
