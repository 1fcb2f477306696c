#pragma once

#include <vector>

#include "nodule/linalg.hpp"

namespace nodule {

// Linear regressor with the standardization recorded at fit time. Constant
// features keep std 1 and weight 0 so prediction ignores them.
struct LinearModel {
  std::vector<double> weights;  // on the standardized scale
  double intercept = 0.0;
  std::vector<double> feature_mean;
  std::vector<double> feature_std;
  bool converged = true;
  int iterations = 0;
};

// min (1/2n)|Y - Xw - b|^2 + lambda*|w|_1 by cyclic coordinate descent with
// soft thresholding on standardized features; unpenalized intercept.
LinearModel fit_lasso(const Matrix& x, const std::vector<double>& y, double lambda,
                      double tol = 1e-8, int max_iter = 10000);

// min (1/2n)|Y - Xw - b|^2 + lambda*(alpha*|w|_1 + (1-alpha)/2*|w|_2^2).
LinearModel fit_elastic_net(const Matrix& x, const std::vector<double>& y, double lambda,
                            double alpha, double tol = 1e-8, int max_iter = 10000);

// Per-sweep solver state for tests and tuning: the dual objective and the
// largest |beta_i| seen during the sweep.
struct SvrDiagnostics {
  std::vector<double> objective;
  std::vector<double> max_abs_beta;
};

// Linear epsilon-insensitive SVR, dual coordinate descent over beta_i in
// [-c, c]. Intercept from unbounded support vectors, median residual
// fallback.
LinearModel fit_svr(const Matrix& x, const std::vector<double>& y, double c, double epsilon,
                    double tol = 1e-6, int max_iter = 1000, SvrDiagnostics* diag = nullptr);

std::vector<double> predict_linear(const LinearModel& model, const Matrix& xq);

// Smallest L1 penalty with an all-zero solution, on standardized features.
double lasso_lambda_max(const Matrix& x, const std::vector<double>& y);

}  // namespace nodule
