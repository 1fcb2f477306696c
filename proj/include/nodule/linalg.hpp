#pragma once

#include <cstddef>
#include <vector>

namespace nodule {

// Dense row-major matrix of doubles. Just enough linear algebra for the
// regression modules; no view machinery.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
  double* row(std::size_t r) { return data.data() + r * cols; }
};

std::vector<double> matvec(const Matrix& m, const std::vector<double>& v);

// In-place lower Cholesky of a symmetric positive definite matrix. Returns
// the index of the first non-positive pivot, or -1 on success. On success the
// lower triangle holds L; the upper triangle is left untouched.
long cholesky_lower(Matrix& a);

// Solve L y = b (lower triangular).
std::vector<double> solve_lower(const Matrix& l, const std::vector<double>& b);

// Solve L^T x = y given lower-triangular L.
std::vector<double> solve_lower_transpose(const Matrix& l, const std::vector<double>& y);

// Solve (L L^T) x = b.
std::vector<double> cholesky_solve(const Matrix& l, const std::vector<double>& b);

double dot(const std::vector<double>& a, const std::vector<double>& b);
double squared_distance(const double* a, const double* b, std::size_t n);

}  // namespace nodule
