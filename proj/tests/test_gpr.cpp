#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "nodule/error.hpp"
#include "nodule/gpr.hpp"
#include "nodule/rng.hpp"
#include "oracles.hpp"

using namespace nodule;

namespace {

Matrix random_matrix(std::size_t n, std::size_t d, std::uint64_t seed, double lo = -2.0,
                     double hi = 2.0) {
  Matrix m(n, d);
  Rng rng(seed);
  for (auto& v : m.data) v = rng.uniform(lo, hi);
  return m;
}

// brute-force posterior from the joint-distribution conditional, via a dense
// inverse of the noisy train-train block
GPPrediction dense_posterior(const Matrix& x, const std::vector<double>& y,
                             const KernelConfig& cfg, const Matrix& xq) {
  const std::size_t n = x.rows;
  Matrix k = kernel_matrix(x, x, cfg);
  for (std::size_t i = 0; i < n; ++i) k.at(i, i) += cfg.sigma_n * cfg.sigma_n;
  const Matrix kinv = oracle::invert(k);
  double y_mean = 0.0;
  for (double v : y) y_mean += v;
  y_mean /= static_cast<double>(n);

  const Matrix kqx = kernel_matrix(xq, x, cfg);
  GPPrediction out;
  out.mean.resize(xq.rows);
  out.variance.resize(xq.rows);
  for (std::size_t q = 0; q < xq.rows; ++q) {
    std::vector<double> kv(n);
    for (std::size_t i = 0; i < n; ++i) kv[i] = kqx.at(q, i);
    std::vector<double> kinv_k(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) kinv_k[i] += kinv.at(i, j) * kv[j];
    }
    double mean = y_mean;
    double quad = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mean += kinv_k[i] * (y[i] - y_mean);
      quad += kinv_k[i] * kv[i];
    }
    out.mean[q] = mean;
    out.variance[q] = cfg.sigma_f * cfg.sigma_f - quad;
  }
  return out;
}

}  // namespace

TEST_CASE("kernel: unit self-similarity and flat-kernel limit") {
  KernelConfig cfg;
  cfg.sigma_f = 1.7;
  cfg.length_scale = 0.9;
  const Matrix x = random_matrix(6, 4, 1);
  const Matrix k = kernel_matrix(x, x, cfg);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(k.at(i, i) == doctest::Approx(1.7 * 1.7).epsilon(1e-14));
  }

  KernelConfig flat = cfg;
  flat.length_scale = 1e6;
  const Matrix kf = kernel_matrix(x, x, flat);
  for (double v : kf.data) CHECK(std::fabs(v - 1.7 * 1.7) < 1e-6);
}

TEST_CASE("kernel: symmetric and positive semidefinite on random inputs") {
  KernelConfig cfg;
  cfg.length_scale = 1.3;
  const Matrix x = random_matrix(12, 3, 2);
  const Matrix k = kernel_matrix(x, x, cfg);
  Matrix sym(12, 12);
  for (std::size_t i = 0; i < 12; ++i) {
    for (std::size_t j = 0; j < 12; ++j) {
      CHECK(std::fabs(k.at(i, j) - k.at(j, i)) < 1e-12);
      sym.at(i, j) = 0.5 * (k.at(i, j) + k.at(j, i));
    }
  }
  const auto eig = oracle::symmetric_eigenvalues(sym);
  CHECK(eig.front() >= -1e-9);
}

TEST_CASE("kernel: dimension mismatch and non-finite features are rejected") {
  KernelConfig cfg;
  const Matrix a = random_matrix(3, 4, 3);
  const Matrix b = random_matrix(3, 5, 4);
  CHECK_THROWS_AS(kernel_matrix(a, b, cfg), DataError);
  Matrix bad = a;
  bad.at(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(kernel_matrix(bad, bad, cfg), DataError);
}

TEST_CASE("median heuristic: enumerated cases and degenerate input") {
  Matrix two(2, 1);
  two.at(0, 0) = 0.0;
  two.at(1, 0) = 2.0;
  CHECK(median_heuristic(two) == doctest::Approx(2.0).epsilon(1e-15));

  Matrix three(3, 1);
  three.at(0, 0) = 0.0;
  three.at(1, 0) = 1.0;
  three.at(2, 0) = 3.0;
  // pairwise distances {1, 2, 3}
  CHECK(median_heuristic(three) == doctest::Approx(2.0).epsilon(1e-15));

  Matrix dup(4, 2, 1.5);
  CHECK_THROWS_AS(median_heuristic(dup), DataError);
  Matrix one(1, 2);
  CHECK_THROWS_AS(median_heuristic(one), DataError);
}

TEST_CASE("fit: single point, duplicate failure, residual accuracy") {
  KernelConfig cfg;
  cfg.sigma_n = 0.0;
  Matrix x1(1, 2);
  x1.at(0, 0) = 0.3;
  x1.at(0, 1) = -0.4;
  const GPModel single = fit(x1, {2.5}, cfg);
  CHECK(single.alpha[0] == 0.0);  // centered target is zero

  Matrix dup(2, 2);
  dup.at(0, 0) = dup.at(1, 0) = 1.0;
  dup.at(0, 1) = dup.at(1, 1) = 2.0;
  CHECK_THROWS_AS(fit(dup, {1.0, 2.0}, cfg), NumericError);

  KernelConfig cfg5;
  cfg5.sigma_n = 0.1;
  cfg5.length_scale = 0.8;
  const Matrix x = random_matrix(5, 2, 5);
  std::vector<double> y{1.0, 4.2, 2.7, 3.3, 4.9};
  const GPModel model = fit(x, y, cfg5);
  // (K + sigma_n^2 I) alpha == y - mean(y)
  Matrix k = kernel_matrix(x, x, cfg5);
  for (std::size_t i = 0; i < 5; ++i) k.at(i, i) += cfg5.sigma_n * cfg5.sigma_n;
  const std::vector<double> lhs = matvec(k, model.alpha);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(std::fabs(lhs[i] - (y[i] - model.y_mean)) < 1e-8);
  }
  // chol * chol^T reconstructs K + sigma_n^2 I
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t <= j; ++t) acc += model.chol.at(i, t) * model.chol.at(j, t);
      CHECK(std::fabs(acc - k.at(i, j)) <= 1e-8 * std::max(1.0, std::fabs(k.at(i, j))));
    }
  }
}

TEST_CASE("predict: interpolation, prior reversion, and the 2-point closed form") {
  KernelConfig cfg;
  cfg.sigma_n = 0.0;
  cfg.length_scale = 1.1;
  const Matrix x = random_matrix(6, 2, 7);
  std::vector<double> y{1.5, 2.0, 4.5, 3.1, 2.2, 4.9};
  const GPModel model = fit(x, y, cfg);
  const GPPrediction at_train = predict(model, x);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(std::fabs(at_train.mean[i] - y[i]) < 1e-6);
    CHECK(at_train.variance[i] < 1e-8);
  }

  Matrix far(1, 2);
  far.at(0, 0) = 1e4;
  far.at(0, 1) = -1e4;
  const GPPrediction far_pred = predict(model, far);
  CHECK(std::fabs(far_pred.mean[0] - model.y_mean) < 1e-6);
  CHECK(std::fabs(far_pred.variance[0] - cfg.sigma_f * cfg.sigma_f) < 1e-6);

  // 2-point model evaluated against a hand-computed 2x2 inverse
  KernelConfig cfg2;
  cfg2.sigma_f = 1.0;
  cfg2.length_scale = 1.0;
  cfg2.sigma_n = 0.1;
  Matrix x2(2, 1);
  x2.at(0, 0) = 0.0;
  x2.at(1, 0) = 1.0;
  const std::vector<double> y2{1.0, 3.0};
  const GPModel m2 = fit(x2, y2, cfg2);
  Matrix q(1, 1);
  q.at(0, 0) = 0.5;
  const GPPrediction got = predict(m2, q);

  const double k01 = std::exp(-0.5);  // exp(-|0-1|^2 / 2)
  const double a11 = 1.0 + 0.01, a12 = k01;
  const double det = a11 * a11 - a12 * a12;
  const double i11 = a11 / det, i12 = -a12 / det;
  const double yc0 = y2[0] - 2.0, yc1 = y2[1] - 2.0;
  const double kv0 = std::exp(-0.125), kv1 = std::exp(-0.125);  // exp(-0.5^2 / 2)
  const double mean = 2.0 + kv0 * (i11 * yc0 + i12 * yc1) + kv1 * (i12 * yc0 + i11 * yc1);
  const double quad = kv0 * (i11 * kv0 + i12 * kv1) + kv1 * (i12 * kv0 + i11 * kv1);
  const double var = 1.0 - quad;
  CHECK(std::fabs(got.mean[0] - mean) < 1e-10);
  CHECK(std::fabs(got.variance[0] - var) < 1e-10);
}

TEST_CASE("predict: 20 seeded fixtures match the dense-inverse conditional") {
  for (int fix = 0; fix < 20; ++fix) {
    const std::uint64_t seed = derive_seed(900, fix);
    Rng rng(seed);
    const std::size_t n = 2 + rng.uniform_int(7);  // 2..8
    const std::size_t d = 1 + rng.uniform_int(3);
    const Matrix x = random_matrix(n, d, seed + 1);
    std::vector<double> y(n);
    for (auto& v : y) v = rng.uniform(1.0, 5.0);
    KernelConfig cfg;
    cfg.sigma_f = rng.uniform(0.5, 2.0);
    cfg.length_scale = rng.uniform(0.5, 2.0);
    cfg.sigma_n = rng.uniform(0.05, 0.3);
    const Matrix xq = random_matrix(4, d, seed + 2);

    const GPModel model = fit(x, y, cfg);
    const GPPrediction got = predict(model, xq);
    const GPPrediction want = dense_posterior(x, y, cfg, xq);
    for (std::size_t q = 0; q < 4; ++q) {
      CHECK(std::fabs(got.mean[q] - want.mean[q]) < 1e-8);
      CHECK(std::fabs(got.variance[q] - std::max(0.0, want.variance[q])) < 1e-8);
      CHECK(got.variance[q] >= 0.0);
      CHECK(got.variance[q] <= cfg.sigma_f * cfg.sigma_f + 1e-9);
    }
  }
}

TEST_CASE("predict: increasing noise shrinks the pull away from the prior mean") {
  // 2-point fixture where the posterior mean has the closed form
  // y_mean + (k2 - k1) / (1 + sigma_n^2 - k12), strictly shrinking in sigma_n
  Matrix x(2, 1);
  x.at(0, 0) = 0.0;
  x.at(1, 0) = 1.0;
  const std::vector<double> y{1.0, 3.0};
  Matrix q(1, 1);
  q.at(0, 0) = 0.9;
  double prev = std::numeric_limits<double>::infinity();
  for (double sn : {0.1, 0.5, 1.0, 2.0, 4.0}) {
    KernelConfig cfg;
    cfg.sigma_n = sn;
    const GPModel model = fit(x, y, cfg);
    const double dev = std::fabs(predict(model, q).mean[0] - 2.0);
    CHECK(dev < prev);
    CHECK(dev > 0.0);
    prev = dev;
  }
}

TEST_CASE("predict: invariant to joint row permutation") {
  const Matrix x = random_matrix(7, 3, 41);
  std::vector<double> y{1.1, 2.2, 3.3, 4.4, 2.8, 3.6, 1.9};
  KernelConfig cfg;
  cfg.sigma_n = 0.15;
  const Matrix xq = random_matrix(3, 3, 42);

  const GPModel a = fit(x, y, cfg);
  Matrix xp(7, 3);
  std::vector<double> yp(7);
  const std::size_t perm[7] = {3, 0, 6, 1, 5, 2, 4};
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t j = 0; j < 3; ++j) xp.at(i, j) = x.at(perm[i], j);
    yp[i] = y[perm[i]];
  }
  const GPModel b = fit(xp, yp, cfg);
  const GPPrediction pa = predict(a, xq);
  const GPPrediction pb = predict(b, xq);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::fabs(pa.mean[i] - pb.mean[i]) < 1e-9);
    CHECK(std::fabs(pa.variance[i] - pb.variance[i]) < 1e-9);
  }
  CHECK(std::fabs(log_marginal_likelihood(a) - log_marginal_likelihood(b)) < 1e-9);
}

TEST_CASE("log marginal likelihood: n=1 closed form and noise comparison") {
  KernelConfig cfg;  // sigma_f 1, sigma_n ... set to 1
  cfg.sigma_n = 1.0;
  Matrix x(1, 1);
  x.at(0, 0) = 0.7;
  const GPModel m = fit(x, {3.0}, cfg);
  constexpr double kLog2Pi = 1.8378770664093454836;
  const double want = -0.5 * std::log(2.0) - 0.5 * kLog2Pi;
  CHECK(log_marginal_likelihood(m) == doctest::Approx(want).epsilon(1e-12));

  // a smooth target explains better than the same target plus wild noise
  const Matrix xs = random_matrix(10, 1, 51);
  std::vector<double> smooth(10), noisy(10);
  Rng rng(52);
  for (std::size_t i = 0; i < 10; ++i) {
    smooth[i] = std::sin(xs.at(i, 0));
    noisy[i] = smooth[i] + rng.normal(0.0, 5.0);
  }
  KernelConfig c2;
  c2.sigma_n = 0.1;
  CHECK(log_marginal_likelihood(fit(xs, smooth, c2)) >
        log_marginal_likelihood(fit(xs, noisy, c2)));
}

TEST_CASE("grid search: never worse than the base configuration") {
  const Matrix x = random_matrix(12, 2, 61);
  std::vector<double> y(12);
  for (std::size_t i = 0; i < 12; ++i) y[i] = std::sin(x.at(i, 0)) + 0.5 * x.at(i, 1);
  KernelConfig base;
  base.length_scale = 1.0;
  base.sigma_n = 0.2;
  const KernelConfig best = grid_search(x, y, base);
  const double lml_base = log_marginal_likelihood(fit(x, y, base));
  const double lml_best = log_marginal_likelihood(fit(x, y, best));
  CHECK(lml_best >= lml_base - 1e-12);
}
