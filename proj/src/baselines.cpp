#include "nodule/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nodule/error.hpp"

namespace nodule {

namespace {

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

struct Standardized {
  Matrix x;  // zero mean, unit (population) std columns; constant columns zeroed
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<bool> constant;
};

Standardized standardize(const Matrix& x) {
  Standardized s;
  s.x = Matrix(x.rows, x.cols);
  s.mean.assign(x.cols, 0.0);
  s.std.assign(x.cols, 1.0);
  s.constant.assign(x.cols, false);
  const double inv_n = 1.0 / static_cast<double>(x.rows);
  for (std::size_t j = 0; j < x.cols; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) m += x.at(i, j);
    m *= inv_n;
    double var = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) {
      const double d = x.at(i, j) - m;
      var += d * d;
    }
    var *= inv_n;
    s.mean[j] = m;
    if (var > 0.0) {
      s.std[j] = std::sqrt(var);
      const double inv = 1.0 / s.std[j];
      for (std::size_t i = 0; i < x.rows; ++i) s.x.at(i, j) = (x.at(i, j) - m) * inv;
    } else {
      s.constant[j] = true;  // column stays zero, recorded std 1
    }
  }
  return s;
}

void check_fit_inputs(const Matrix& x, const std::vector<double>& y) {
  if (x.rows < 2) throw DataError("fit: need at least 2 samples");
  if (y.size() != x.rows) throw DataError("fit: X/Y row count mismatch");
  for (double v : x.data) {
    if (!std::isfinite(v)) throw DataError("fit: non-finite feature");
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw DataError("fit: non-finite target");
  }
}

// Shared coordinate-descent core for lasso (alpha = 1) and elastic net.
LinearModel cd_fit(const Matrix& x, const std::vector<double>& y, double lambda, double alpha,
                   double tol, int max_iter) {
  check_fit_inputs(x, y);
  if (lambda < 0.0) throw DataError("fit: lambda must be >= 0");
  if (alpha < 0.0 || alpha > 1.0) throw DataError("fit: alpha must be in [0,1]");

  Standardized s = standardize(x);
  const std::size_t n = x.rows, d = x.cols;
  const double inv_n = 1.0 / static_cast<double>(n);

  double y_mean = 0.0;
  for (double v : y) y_mean += v;
  y_mean *= inv_n;

  LinearModel model;
  model.feature_mean = s.mean;
  model.feature_std = s.std;
  model.intercept = y_mean;  // standardized columns have zero mean
  model.weights.assign(d, 0.0);

  std::vector<double> residual(n);
  for (std::size_t i = 0; i < n; ++i) residual[i] = y[i] - y_mean;

  const double l1 = lambda * alpha;
  const double denom = 1.0 + lambda * (1.0 - alpha);  // columns have unit 1/n self-product
  model.converged = false;
  int it = 0;
  for (; it < max_iter; ++it) {
    double max_change = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      if (s.constant[j]) continue;
      double rho = 0.0;
      for (std::size_t i = 0; i < n; ++i) rho += s.x.at(i, j) * residual[i];
      rho = rho * inv_n + model.weights[j];
      const double w_new = soft_threshold(rho, l1) / denom;
      const double delta = w_new - model.weights[j];
      if (delta != 0.0) {
        for (std::size_t i = 0; i < n; ++i) residual[i] -= delta * s.x.at(i, j);
        model.weights[j] = w_new;
      }
      max_change = std::max(max_change, std::fabs(delta));
    }
    if (max_change < tol) {
      model.converged = true;
      ++it;
      break;
    }
  }
  model.iterations = it;
  return model;
}

}  // namespace

LinearModel fit_lasso(const Matrix& x, const std::vector<double>& y, double lambda,
                      double tol, int max_iter) {
  return cd_fit(x, y, lambda, 1.0, tol, max_iter);
}

LinearModel fit_elastic_net(const Matrix& x, const std::vector<double>& y, double lambda,
                            double alpha, double tol, int max_iter) {
  return cd_fit(x, y, lambda, alpha, tol, max_iter);
}

double lasso_lambda_max(const Matrix& x, const std::vector<double>& y) {
  check_fit_inputs(x, y);
  Standardized s = standardize(x);
  const double inv_n = 1.0 / static_cast<double>(x.rows);
  double y_mean = 0.0;
  for (double v : y) y_mean += v;
  y_mean *= inv_n;
  double best = 0.0;
  for (std::size_t j = 0; j < x.cols; ++j) {
    double g = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) g += s.x.at(i, j) * (y[i] - y_mean);
    best = std::max(best, std::fabs(g) * inv_n);
  }
  return best;
}

LinearModel fit_svr(const Matrix& x, const std::vector<double>& y, double c, double epsilon,
                    double tol, int max_iter, SvrDiagnostics* diag) {
  check_fit_inputs(x, y);
  if (!(c > 0.0)) throw DataError("svr: c must be > 0");
  if (epsilon < 0.0) throw DataError("svr: epsilon must be >= 0");

  Standardized s = standardize(x);
  const std::size_t n = x.rows, d = x.cols;

  double y_mean = 0.0;
  for (double v : y) y_mean += v;
  y_mean /= static_cast<double>(n);
  std::vector<double> yc(n);
  for (std::size_t i = 0; i < n; ++i) yc[i] = y[i] - y_mean;

  std::vector<double> q_diag(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = s.x.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += xi[j] * xi[j];
    q_diag[i] = acc;
  }

  std::vector<double> beta(n, 0.0);
  std::vector<double> w(d, 0.0);
  if (diag) {
    diag->objective.clear();
    diag->max_abs_beta.clear();
  }

  LinearModel model;
  model.feature_mean = s.mean;
  model.feature_std = s.std;
  model.converged = false;

  int it = 0;
  for (; it < max_iter; ++it) {
    double max_violation = 0.0;
    double sweep_max_beta = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (q_diag[i] <= 0.0) continue;  // all-zero sample
      const double* xi = s.x.row(i);
      double xw = 0.0;
      for (std::size_t j = 0; j < d; ++j) xw += xi[j] * w[j];
      const double g = xw - yc[i];

      // projected-gradient violation at the current beta_i
      double viol;
      if (beta[i] >= c) {
        viol = std::max(0.0, g + epsilon);
      } else if (beta[i] <= -c) {
        viol = std::max(0.0, -(g - epsilon));
      } else if (beta[i] > 0.0) {
        viol = std::fabs(g + epsilon);
      } else if (beta[i] < 0.0) {
        viol = std::fabs(g - epsilon);
      } else {
        viol = std::max(0.0, std::fabs(g) - epsilon);
      }
      max_violation = std::max(max_violation, viol);

      // exact coordinate minimization of 1/2 q t^2 - u t + eps|t| on [-c, c]
      const double u = yc[i] - (xw - q_diag[i] * beta[i]);
      double t = soft_threshold(u, epsilon) / q_diag[i];
      t = std::clamp(t, -c, c);
      const double delta = t - beta[i];
      if (delta != 0.0) {
        for (std::size_t j = 0; j < d; ++j) w[j] += delta * xi[j];
        beta[i] = t;
      }
      sweep_max_beta = std::max(sweep_max_beta, std::fabs(beta[i]));
    }
    if (diag) {
      double obj = 0.0;
      for (std::size_t j = 0; j < d; ++j) obj += 0.5 * w[j] * w[j];
      for (std::size_t i = 0; i < n; ++i) obj += epsilon * std::fabs(beta[i]) - yc[i] * beta[i];
      diag->objective.push_back(obj);
      diag->max_abs_beta.push_back(sweep_max_beta);
    }
    if (max_violation < tol) {
      model.converged = true;
      ++it;
      break;
    }
  }
  model.iterations = it;
  model.weights = w;

  // intercept: KKT residual at unbounded support vectors
  double b = 0.0;
  std::size_t n_free = 0;
  const double bound_eps = 1e-12 * c;
  for (std::size_t i = 0; i < n; ++i) {
    if (beta[i] != 0.0 && std::fabs(beta[i]) < c - bound_eps) {
      const double* xi = s.x.row(i);
      double xw = 0.0;
      for (std::size_t j = 0; j < d; ++j) xw += xi[j] * w[j];
      b += yc[i] - xw - epsilon * (beta[i] > 0.0 ? 1.0 : -1.0);
      ++n_free;
    }
  }
  if (n_free > 0) {
    b /= static_cast<double>(n_free);
  } else {
    // median residual, clamped into the zero-loss interval when one exists
    // (otherwise a tube that already contains every residual could end up
    // off-center and spuriously violate it)
    std::vector<double> resid(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double* xi = s.x.row(i);
      double xw = 0.0;
      for (std::size_t j = 0; j < d; ++j) xw += xi[j] * w[j];
      resid[i] = yc[i] - xw;
    }
    std::sort(resid.begin(), resid.end());
    b = n % 2 == 1 ? resid[n / 2] : 0.5 * (resid[n / 2 - 1] + resid[n / 2]);
    const double lo = resid.back() - epsilon;
    const double hi = resid.front() + epsilon;
    if (lo <= hi) b = std::clamp(b, lo, hi);
  }
  model.intercept = y_mean + b;
  return model;
}

std::vector<double> predict_linear(const LinearModel& model, const Matrix& xq) {
  if (xq.cols != model.weights.size()) {
    throw DataError("predict: feature dimension mismatch (" + std::to_string(xq.cols) +
                    " vs " + std::to_string(model.weights.size()) + ")");
  }
  std::vector<double> out(xq.rows, model.intercept);
  for (std::size_t i = 0; i < xq.rows; ++i) {
    const double* row = xq.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < xq.cols; ++j) {
      acc += model.weights[j] * (row[j] - model.feature_mean[j]) / model.feature_std[j];
    }
    out[i] += acc;
  }
  return out;
}

}  // namespace nodule
