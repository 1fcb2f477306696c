#pragma once

#include <cstdint>
#include <vector>

#include "nodule/linalg.hpp"

namespace nodule {

// Squared-exponential kernel k(a,b) = sigma_f^2 exp(-|a-b|^2 / (2 l^2)) with
// observation noise sigma_n.
struct KernelConfig {
  double sigma_f = 1.0;
  double length_scale = 1.0;
  double sigma_n = 0.1;

  void validate() const;  // throws DataError
};

struct GPModel {
  Matrix x;                   // n x d training features
  std::vector<double> y;      // n targets
  KernelConfig cfg;
  Matrix chol;                // lower Cholesky factor of K + sigma_n^2 I
  std::vector<double> alpha;  // (K + sigma_n^2 I)^-1 (y - y_mean)
  double y_mean = 0.0;
};

struct GPPrediction {
  std::vector<double> mean;
  std::vector<double> variance;
};

Matrix kernel_matrix(const Matrix& a, const Matrix& b, const KernelConfig& cfg);

// Median of pairwise Euclidean distances over distinct row pairs; rows are
// subsampled (seeded) to at most 1000 when n exceeds that. Errors when the
// median distance is zero (duplicate-dominated input).
double median_heuristic(const Matrix& x);

// Cholesky of K + sigma_n^2 I and dual weights for the centered targets. One
// jitter retry (1e-10 * trace/n) before reporting the failing pivot.
GPModel fit(const Matrix& x, const std::vector<double>& y, const KernelConfig& cfg);

// Posterior mean and variance at each query row. Variance is clamped at 0.
GPPrediction predict(const GPModel& model, const Matrix& xq);

double log_marginal_likelihood(const GPModel& model);

// Grid search over length-scale and noise multipliers {0.25,0.5,1,2,4}
// around `base`, maximizing the log marginal likelihood.
KernelConfig grid_search(const Matrix& x, const std::vector<double>& y,
                         const KernelConfig& base);

}  // namespace nodule
