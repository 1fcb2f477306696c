#include "nodule/linalg.hpp"

#include <cassert>
#include <cmath>

namespace nodule {

std::vector<double> matvec(const Matrix& m, const std::vector<double>& v) {
  assert(v.size() == m.cols);
  std::vector<double> out(m.rows, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* row = m.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) acc += row[c] * v[c];
    out[r] = acc;
  }
  return out;
}

long cholesky_lower(Matrix& a) {
  assert(a.rows == a.cols);
  const std::size_t n = a.rows;
  for (std::size_t j = 0; j < n; ++j) {
    double d = a.at(j, j);
    const double* rowj = a.row(j);
    for (std::size_t k = 0; k < j; ++k) d -= rowj[k] * rowj[k];
    if (!(d > 0.0) || !std::isfinite(d)) return static_cast<long>(j);
    const double ljj = std::sqrt(d);
    a.at(j, j) = ljj;
    const double inv = 1.0 / ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a.at(i, j);
      const double* rowi = a.row(i);
      for (std::size_t k = 0; k < j; ++k) s -= rowi[k] * rowj[k];
      a.at(i, j) = s * inv;
    }
  }
  return -1;
}

std::vector<double> solve_lower(const Matrix& l, const std::vector<double>& b) {
  const std::size_t n = l.rows;
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    const double* row = l.row(i);
    for (std::size_t k = 0; k < i; ++k) s -= row[k] * y[k];
    y[i] = s / row[i];
  }
  return y;
}

std::vector<double> solve_lower_transpose(const Matrix& l, const std::vector<double>& y) {
  const std::size_t n = l.rows;
  std::vector<double> x(y);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = x[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l.at(k, ii) * x[k];
    x[ii] = s / l.at(ii, ii);
  }
  return x;
}

std::vector<double> cholesky_solve(const Matrix& l, const std::vector<double>& b) {
  return solve_lower_transpose(l, solve_lower(l, b));
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_distance(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace nodule
