#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nodule/augment.hpp"
#include "nodule/cnn.hpp"
#include "nodule/linalg.hpp"

namespace nodule {

// Fraction of predictions within `margin` of the target, boundary inclusive.
double margin_accuracy(const std::vector<double>& preds, const std::vector<double>& labels,
                       double margin = 1.0);

// Standard error of the mean: sample std (k-1 denominator) / sqrt(k).
double sem(const std::vector<double>& fold_values);

// Per-dimension mean and std recorded on the training split. std == 0 marks a
// zero-variance dimension, which fuses to 0.
struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> std;
};

// Attributes first, then CNN features; either may be null but not both.
std::vector<double> concat_features(const FeatureVector* cnn,
                                    const std::array<double, 6>* attributes);

FeatureStats compute_stats(const std::vector<std::vector<double>>& rows);

// z-score the concatenation with training-split stats.
std::vector<double> fuse_features(const FeatureVector* cnn,
                                  const std::array<double, 6>* attributes,
                                  const FeatureStats& stats);

struct MethodSpec {
  std::string regressor;  // gp | lasso | enet | svr
  std::string features;   // cnn | attr | fused
};

struct ExperimentConfig {
  std::string manifest;
  int folds = 10;
  std::uint64_t seed = 42;
  double margin = 1.0;
  int patch_side = 41;
  double resample_mm = 0.5;

  int augment_count = 50;
  AugmentConfig augment;  // count/seed are overridden per fold and nodule

  NetworkConfig net;      // input_side is forced to patch_side
  TrainConfig train_cfg;  // seed is overridden per fold
  int threads = 1;

  int subsample = 2000;
  double gp_sigma_n_scale = 0.1;
  bool gp_grid_search = false;
  std::vector<MethodSpec> rows = {{"gp", "cnn"},   {"gp", "attr"}, {"gp", "fused"},
                                  {"lasso", "cnn"}, {"enet", "cnn"}, {"svr", "cnn"}};

  // Flat key=value text file; '#' starts a comment. Unknown keys are errors.
  static ExperimentConfig from_file(const std::string& path);
  void set_key(const std::string& key, const std::string& value);
  nlohmann::ordered_json echo() const;
  void validate() const;
};

struct MethodResult {
  MethodSpec spec;
  std::vector<double> fold_accuracy_pct;
  double mean_accuracy_pct = 0.0;
  double sem_pct = 0.0;
};

struct Report {
  nlohmann::ordered_json config_echo;
  std::uint64_t seed = 0;
  int folds = 0;
  double margin = 1.0;
  std::size_t dropped_few_raters = 0;
  std::size_t dropped_score_three = 0;
  std::vector<MethodResult> rows;
  double timing_seconds = 0.0;  // serialized only on request; wall time is
                                // not part of the deterministic output

  std::string to_json(bool include_timing = false) const;
  static Report from_json_text(const std::string& text);
  std::string render_table() const;
};

// Per-fold record of which sample ids each training-side computation
// consulted; used to assert the no-leakage invariant in tests.
struct FoldTrace {
  std::vector<std::string> test_ids;
  std::vector<std::string> balanced_train_ids;
  std::vector<std::string> regressor_train_ids;
  std::vector<std::string> selection_ids;
};

// The cross-validated pipeline: per fold, balance the training ids, augment,
// train the CNN with its validation carve-out, extract features, subsample
// for the regressors, fit every configured method and score the held-out
// fold. Deterministic for a fixed config.
Report run_experiment(const ExperimentConfig& cfg, std::vector<FoldTrace>* trace = nullptr);

// Load, resample, crop and project one manifest sample. `manifest_dir`
// anchors relative volume paths; centers are voxel indices on the stored grid
// and are mapped onto the resampled one.
ProjectionTensor sample_tensor(const std::string& volume_path, const std::array<int, 3>& center,
                               const std::string& manifest_dir, int patch_side,
                               double resample_mm);

// The standalone `train` stage: consensus-label the whole manifest, balance,
// augment and train one CNN (no folds).
TrainResult train_on_manifest(const ExperimentConfig& cfg);

// Feature interchange CSV: header "id,score,f0,...,f{d-1}", one sample per
// line. Predictions CSV: "id,mean,variance" (variance 0 for point predictors).
struct FeatureTable {
  std::vector<std::string> ids;
  std::vector<double> scores;
  Matrix x;
};
void save_feature_csv(const FeatureTable& table, const std::string& path);
FeatureTable load_feature_csv(const std::string& path);
void save_predictions_csv(const std::vector<std::string>& ids, const std::vector<double>& mean,
                          const std::vector<double>& variance, const std::string& path);

}  // namespace nodule
