#include "fmp/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "fmp/error.hpp"
#include "fmp/simd/kernels.hpp"

namespace fmp {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::out_of_range: return "out_of_range";
    case ErrorCode::empty_group: return "empty_group";
    case ErrorCode::numeric: return "numeric";
    case ErrorCode::infeasible: return "infeasible";
    case ErrorCode::io: return "io";
    case ErrorCode::parse: return "parse";
  }
  return "unknown";
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows_ * cols_, ErrorCode::dimension_mismatch,
          "matrix data length does not equal rows*cols");
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    require(row.size() == c, ErrorCode::dimension_mismatch, "ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::row_vector(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::column_vector(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  require(a.same_shape(b), ErrorCode::dimension_mismatch,
          std::string(what) + ": shapes " + a.shape_string() + " and " + b.shape_string());
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), ErrorCode::dimension_mismatch,
          "matmul: " + a.shape_string() + " by " + b.shape_string());
  Matrix c(a.rows(), b.cols());
  simd::active_kernels().gemm(a.rows(), a.cols(), b.cols(), a.data(), b.data(), c.data());
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), ErrorCode::dimension_mismatch,
          "matmul_tn: " + a.shape_string() + " by " + b.shape_string());
  Matrix c(a.cols(), b.cols());
  simd::active_kernels().gemm_tn(a.cols(), a.rows(), b.cols(), a.data(), b.data(), c.data());
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), ErrorCode::dimension_mismatch,
          "matmul_nt: " + a.shape_string() + " by " + b.shape_string());
  Matrix c(a.rows(), b.rows());
  simd::active_kernels().gemm_nt(a.rows(), a.cols(), b.rows(), a.data(), b.data(), c.data());
  return c;
}

Matrix axpby(double a, const Matrix& x, double b, const Matrix& y) {
  require_same_shape(x, y, "axpby");
  Matrix out(x.rows(), x.cols());
  simd::active_kernels().axpby(x.size(), a, x.data(), b, y.data(), out.data());
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out(a.rows(), a.cols());
  simd::active_kernels().mul(a.size(), a.data(), b.data(), out.data());
  return out;
}

Matrix scaled(const Matrix& a, double c) {
  Matrix out(a.rows(), a.cols());
  simd::active_kernels().scale(a.size(), c, a.data(), out.data());
  return out;
}

Matrix row_softmax(const Matrix& a) {
  require(a.cols() > 0, ErrorCode::dimension_mismatch, "row_softmax: zero columns");
  Matrix out(a.rows(), a.cols());
  simd::active_kernels().row_softmax(a.rows(), a.cols(), a.data(), out.data());
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

bool all_finite(const Matrix& a) {
  return std::all_of(a.values().begin(), a.values().end(),
                     [](double v) { return std::isfinite(v); });
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace fmp
