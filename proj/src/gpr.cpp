#include "nodule/gpr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "nodule/error.hpp"
#include "nodule/rng.hpp"

namespace nodule {

void KernelConfig::validate() const {
  if (!(sigma_f > 0.0)) throw DataError("gp: sigma_f must be > 0");
  if (!(length_scale > 0.0)) throw DataError("gp: length_scale must be > 0");
  if (!(sigma_n >= 0.0)) throw DataError("gp: sigma_n must be >= 0");
}

Matrix kernel_matrix(const Matrix& a, const Matrix& b, const KernelConfig& cfg) {
  cfg.validate();
  if (a.cols != b.cols) {
    throw DataError("gp: feature dimension mismatch (" + std::to_string(a.cols) + " vs " +
                    std::to_string(b.cols) + ")");
  }
  for (double v : a.data) {
    if (!std::isfinite(v)) throw DataError("gp: non-finite feature value");
  }
  for (double v : b.data) {
    if (!std::isfinite(v)) throw DataError("gp: non-finite feature value");
  }
  const double sf2 = cfg.sigma_f * cfg.sigma_f;
  const double inv2l2 = 1.0 / (2.0 * cfg.length_scale * cfg.length_scale);
  Matrix k(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < b.rows; ++j) {
      k.at(i, j) = sf2 * std::exp(-squared_distance(a.row(i), b.row(j), a.cols) * inv2l2);
    }
  }
  return k;
}

double median_heuristic(const Matrix& x) {
  if (x.rows < 2) throw DataError("gp: median heuristic needs at least 2 rows");
  std::vector<std::size_t> rows(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) rows[i] = i;
  if (x.rows > 1000) {
    Rng rng(derive_seed(0x6d656469616eull, x.rows));  // fixed stream, pure function of input
    rng.shuffle(rows);
    rows.resize(1000);
  }
  std::vector<double> dists;
  dists.reserve(rows.size() * (rows.size() - 1) / 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      dists.push_back(std::sqrt(squared_distance(x.row(rows[i]), x.row(rows[j]), x.cols)));
    }
  }
  std::sort(dists.begin(), dists.end());
  const std::size_t n = dists.size();
  const double med = n % 2 == 1 ? dists[n / 2] : 0.5 * (dists[n / 2 - 1] + dists[n / 2]);
  if (!(med > 0.0)) {
    throw DataError("gp: median pairwise distance is zero (duplicate rows)");
  }
  return med;
}

GPModel fit(const Matrix& x, const std::vector<double>& y, const KernelConfig& cfg) {
  cfg.validate();
  if (x.rows < 1) throw DataError("gp: need at least one training point");
  if (y.size() != x.rows) throw DataError("gp: X/Y row count mismatch");
  for (double v : y) {
    if (!std::isfinite(v)) throw DataError("gp: non-finite target");
  }

  GPModel model;
  model.x = x;
  model.y = y;
  model.cfg = cfg;
  model.y_mean = 0.0;
  for (double v : y) model.y_mean += v;
  model.y_mean /= static_cast<double>(y.size());

  Matrix k = kernel_matrix(x, x, cfg);
  const double noise = cfg.sigma_n * cfg.sigma_n;
  double trace = 0.0;
  for (std::size_t i = 0; i < k.rows; ++i) {
    k.at(i, i) += noise;
    trace += k.at(i, i);
  }

  Matrix chol = k;
  long pivot = cholesky_lower(chol);
  if (pivot >= 0 && cfg.sigma_n > 0.0) {
    // one jitter retry for borderline conditioning; with sigma_n = 0 a
    // singular K violates the fit precondition and must be reported
    const double jitter = 1e-10 * trace / static_cast<double>(k.rows);
    chol = k;
    for (std::size_t i = 0; i < chol.rows; ++i) chol.at(i, i) += jitter;
    pivot = cholesky_lower(chol);
  }
  if (pivot >= 0) {
    throw NumericError("gp: Cholesky factorization failed at pivot " + std::to_string(pivot) +
                       " (duplicate points with sigma_n = 0, or invalid kernel config)");
  }
  model.chol = std::move(chol);

  std::vector<double> centered(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) centered[i] = y[i] - model.y_mean;
  model.alpha = cholesky_solve(model.chol, centered);
  return model;
}

GPPrediction predict(const GPModel& model, const Matrix& xq) {
  if (xq.cols != model.x.cols) {
    throw DataError("gp: query dimension mismatch (" + std::to_string(xq.cols) + " vs " +
                    std::to_string(model.x.cols) + ")");
  }
  const Matrix kqx = kernel_matrix(xq, model.x, model.cfg);
  const double sf2 = model.cfg.sigma_f * model.cfg.sigma_f;

  GPPrediction out;
  out.mean.resize(xq.rows);
  out.variance.resize(xq.rows);
  std::vector<double> kvec(model.x.rows);
  for (std::size_t i = 0; i < xq.rows; ++i) {
    const double* krow = kqx.row(i);
    double m = model.y_mean;
    for (std::size_t j = 0; j < model.x.rows; ++j) m += krow[j] * model.alpha[j];
    out.mean[i] = m;

    kvec.assign(krow, krow + model.x.rows);
    const std::vector<double> v = solve_lower(model.chol, kvec);
    double var = sf2 - dot(v, v);
    out.variance[i] = var > 0.0 ? var : 0.0;
  }
  return out;
}

double log_marginal_likelihood(const GPModel& model) {
  const std::size_t n = model.y.size();
  double fit_term = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    fit_term += (model.y[i] - model.y_mean) * model.alpha[i];
  }
  double logdet_half = 0.0;
  for (std::size_t i = 0; i < n; ++i) logdet_half += std::log(model.chol.at(i, i));
  constexpr double kLog2Pi = 1.8378770664093454836;
  return -0.5 * fit_term - logdet_half - 0.5 * static_cast<double>(n) * kLog2Pi;
}

KernelConfig grid_search(const Matrix& x, const std::vector<double>& y,
                         const KernelConfig& base) {
  static constexpr double kMults[] = {0.25, 0.5, 1.0, 2.0, 4.0};
  KernelConfig best = base;
  double best_lml = -std::numeric_limits<double>::infinity();
  for (double ml : kMults) {
    for (double mn : kMults) {
      KernelConfig cand = base;
      cand.length_scale = base.length_scale * ml;
      cand.sigma_n = base.sigma_n * mn;
      double lml;
      try {
        lml = log_marginal_likelihood(fit(x, y, cand));
      } catch (const NumericError&) {
        continue;
      }
      if (lml > best_lml) {
        best_lml = lml;
        best = cand;
      }
    }
  }
  return best;
}

}  // namespace nodule
