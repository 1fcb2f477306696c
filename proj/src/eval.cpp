#include "nodule/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "nodule/baselines.hpp"
#include "nodule/dataset.hpp"
#include "nodule/error.hpp"
#include "nodule/gpr.hpp"
#include "nodule/volume.hpp"

namespace nodule {

double margin_accuracy(const std::vector<double>& preds, const std::vector<double>& labels,
                       double margin) {
  if (preds.empty()) throw DataError("margin_accuracy: empty input");
  if (preds.size() != labels.size()) {
    throw DataError("margin_accuracy: length mismatch (" + std::to_string(preds.size()) +
                    " vs " + std::to_string(labels.size()) + ")");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (std::fabs(preds[i] - labels[i]) <= margin) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double sem(const std::vector<double>& fold_values) {
  const std::size_t k = fold_values.size();
  if (k < 2) throw DataError("sem: need at least 2 folds");
  double mean = 0.0;
  for (double v : fold_values) mean += v;
  mean /= static_cast<double>(k);
  double ss = 0.0;
  for (double v : fold_values) ss += (v - mean) * (v - mean);
  const double sample_std = std::sqrt(ss / static_cast<double>(k - 1));
  return sample_std / std::sqrt(static_cast<double>(k));
}

std::vector<double> concat_features(const FeatureVector* cnn,
                                    const std::array<double, 6>* attributes) {
  if (!cnn && !attributes) throw DataError("fuse: at least one feature source required");
  std::vector<double> out;
  out.reserve((attributes ? 6 : 0) + (cnn ? cnn->size() : 0));
  if (attributes) out.insert(out.end(), attributes->begin(), attributes->end());
  if (cnn) out.insert(out.end(), cnn->begin(), cnn->end());
  return out;
}

FeatureStats compute_stats(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw DataError("stats: no rows");
  const std::size_t d = rows[0].size();
  FeatureStats s;
  s.mean.assign(d, 0.0);
  s.std.assign(d, 0.0);
  for (const auto& r : rows) {
    if (r.size() != d) throw DataError("stats: inconsistent feature dimensions");
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += r[j];
  }
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  for (auto& m : s.mean) m *= inv_n;
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < d; ++j) {
      const double dlt = r[j] - s.mean[j];
      s.std[j] += dlt * dlt;
    }
  }
  for (auto& v : s.std) v = std::sqrt(v * inv_n);
  return s;
}

std::vector<double> fuse_features(const FeatureVector* cnn,
                                  const std::array<double, 6>* attributes,
                                  const FeatureStats& stats) {
  std::vector<double> raw = concat_features(cnn, attributes);
  if (raw.size() != stats.mean.size()) {
    throw DataError("fuse: stats dimension mismatch (" + std::to_string(stats.mean.size()) +
                    " vs " + std::to_string(raw.size()) + ")");
  }
  for (std::size_t j = 0; j < raw.size(); ++j) {
    raw[j] = stats.std[j] > 0.0 ? (raw[j] - stats.mean[j]) / stats.std[j] : 0.0;
  }
  return raw;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

long to_long(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    long x = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw DataError("config: bad integer for " + key + ": '" + v + "'");
  }
}

double to_double(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw DataError("config: bad number for " + key + ": '" + v + "'");
  }
}

bool to_bool(const std::string& v, const std::string& key) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw DataError("config: bad flag for " + key + ": '" + v + "' (use 0/1)");
}

bool valid_regressor(const std::string& s) {
  return s == "gp" || s == "lasso" || s == "enet" || s == "svr";
}

bool valid_features(const std::string& s) {
  return s == "cnn" || s == "attr" || s == "fused";
}

}  // namespace

void ExperimentConfig::set_key(const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string value = trim(raw_value);
  if (key == "manifest") manifest = value;
  else if (key == "folds") folds = static_cast<int>(to_long(value, key));
  else if (key == "seed") seed = static_cast<std::uint64_t>(to_long(value, key));
  else if (key == "margin") margin = to_double(value, key);
  else if (key == "patch_side") patch_side = static_cast<int>(to_long(value, key));
  else if (key == "resample_mm") resample_mm = to_double(value, key);
  else if (key == "augment_count") augment_count = static_cast<int>(to_long(value, key));
  else if (key == "scale_up") augment.scale_up = to_double(value, key);
  else if (key == "scale_down") augment.scale_down = to_double(value, key);
  else if (key == "gaussian_mean_range") augment.gaussian_mean_range = to_double(value, key);
  else if (key == "gaussian_sigma") augment.gaussian_sigma = to_double(value, key);
  else if (key == "sp_fraction") augment.sp_fraction = to_double(value, key);
  else if (key == "speckle_sigma") augment.speckle_sigma = to_double(value, key);
  else if (key == "cnn_channels") {
    const auto cells = split(value, ',');
    if (cells.size() != 5) throw DataError("config: cnn_channels needs 5 values");
    for (int i = 0; i < 5; ++i) {
      net.conv[i].out_channels = static_cast<int>(to_long(cells[i], key));
    }
  } else if (key == "cnn_kernel") {
    const int ksz = static_cast<int>(to_long(value, key));
    for (auto& c : net.conv) {
      c.kernel = ksz;
      c.pad = ksz / 2;
    }
  } else if (key == "cnn_fc") {
    const auto cells = split(value, ',');
    if (cells.size() != 3) throw DataError("config: cnn_fc needs 3 values");
    for (int i = 0; i < 3; ++i) net.fc[i] = static_cast<int>(to_long(cells[i], key));
  } else if (key == "cnn_iterations") train_cfg.iterations = static_cast<int>(to_long(value, key));
  else if (key == "cnn_batch") train_cfg.batch_size = static_cast<int>(to_long(value, key));
  else if (key == "cnn_lr") train_cfg.learning_rate = to_double(value, key);
  else if (key == "cnn_momentum") train_cfg.momentum = to_double(value, key);
  else if (key == "cnn_val_fraction") train_cfg.validation_fraction = to_double(value, key);
  else if (key == "threads") threads = static_cast<int>(to_long(value, key));
  else if (key == "subsample") subsample = static_cast<int>(to_long(value, key));
  else if (key == "gp_sigma_n_scale") gp_sigma_n_scale = to_double(value, key);
  else if (key == "gp_grid_search") gp_grid_search = to_bool(value, key);
  else if (key == "rows") {
    rows.clear();
    for (const auto& item : split(value, ',')) {
      const auto parts = split(trim(item), ':');
      if (parts.size() != 2 || !valid_regressor(parts[0]) || !valid_features(parts[1])) {
        throw DataError("config: bad row spec '" + item + "' (want regressor:features)");
      }
      rows.push_back({parts[0], parts[1]});
    }
  } else {
    throw DataError("config: unknown key '" + key + "'");
  }
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("config file not found: " + path);
  ExperimentConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line.substr(0, line.find('#')));
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw DataError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    cfg.set_key(stripped.substr(0, eq), stripped.substr(eq + 1));
  }
  return cfg;
}

void ExperimentConfig::validate() const {
  if (manifest.empty()) throw DataError("config: manifest is required");
  if (folds < 2) throw DataError("config: folds must be >= 2");
  if (margin < 0.0) throw DataError("config: margin must be >= 0");
  if (patch_side < 3 || patch_side % 2 == 0) throw DataError("config: patch_side must be odd >= 3");
  if (!(resample_mm > 0.0)) throw DataError("config: resample_mm must be > 0");
  if (augment_count < 0) throw DataError("config: augment_count must be >= 0");
  if (subsample < 1) throw DataError("config: subsample must be >= 1");
  if (rows.empty()) throw DataError("config: at least one row required");
  for (const auto& r : rows) {
    if (!valid_regressor(r.regressor) || !valid_features(r.features)) {
      throw DataError("config: bad row " + r.regressor + ":" + r.features);
    }
  }
  NetworkConfig n = net;
  n.input_side = patch_side;
  n.validate();
  train_cfg.validate();
}

nlohmann::ordered_json ExperimentConfig::echo() const {
  nlohmann::ordered_json j;
  j["manifest"] = manifest;
  j["folds"] = folds;
  j["seed"] = seed;
  j["margin"] = margin;
  j["patch_side"] = patch_side;
  j["resample_mm"] = resample_mm;
  j["augment_count"] = augment_count;
  j["scale_up"] = augment.scale_up;
  j["scale_down"] = augment.scale_down;
  j["gaussian_mean_range"] = augment.gaussian_mean_range;
  j["gaussian_sigma"] = augment.gaussian_sigma;
  j["sp_fraction"] = augment.sp_fraction;
  j["speckle_sigma"] = augment.speckle_sigma;
  {
    std::string ch;
    for (int i = 0; i < 5; ++i) ch += (i ? "," : "") + std::to_string(net.conv[i].out_channels);
    j["cnn_channels"] = ch;
    j["cnn_kernel"] = net.conv[0].kernel;
    std::string fc;
    for (int i = 0; i < 3; ++i) fc += (i ? "," : "") + std::to_string(net.fc[i]);
    j["cnn_fc"] = fc;
  }
  j["cnn_iterations"] = train_cfg.iterations;
  j["cnn_batch"] = train_cfg.batch_size;
  j["cnn_lr"] = train_cfg.learning_rate;
  j["cnn_momentum"] = train_cfg.momentum;
  j["cnn_val_fraction"] = train_cfg.validation_fraction;
  j["threads"] = threads;
  j["subsample"] = subsample;
  j["gp_sigma_n_scale"] = gp_sigma_n_scale;
  j["gp_grid_search"] = gp_grid_search;
  {
    std::string r;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      r += (i ? "," : "") + rows[i].regressor + ":" + rows[i].features;
    }
    j["rows"] = r;
  }
  return j;
}

std::string Report::to_json(bool include_timing) const {
  nlohmann::ordered_json j;
  j["schema"] = "nodule-report-v1";
  j["seed"] = seed;
  j["folds"] = folds;
  j["margin"] = margin;
  j["config"] = config_echo;
  j["dropped"] = {{"few_raters", dropped_few_raters}, {"score_three", dropped_score_three}};
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json row;
    row["method"] = r.spec.regressor;
    row["features"] = r.spec.features;
    row["fold_accuracy_pct"] = r.fold_accuracy_pct;
    row["mean_accuracy_pct"] = r.mean_accuracy_pct;
    row["sem_pct"] = r.sem_pct;
    j["rows"].push_back(row);
  }
  if (include_timing) j["timing_seconds"] = timing_seconds;
  return j.dump(2) + "\n";
}

Report Report::from_json_text(const std::string& text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("report: invalid JSON: ") + e.what());
  }
  if (!j.contains("schema") || j["schema"] != "nodule-report-v1") {
    throw DataError("report: missing or unknown schema tag");
  }
  Report r;
  try {
    r.seed = j.at("seed").get<std::uint64_t>();
    r.folds = j.at("folds").get<int>();
    r.margin = j.at("margin").get<double>();
    r.config_echo = j.value("config", nlohmann::ordered_json::object());
    r.dropped_few_raters = j.at("dropped").at("few_raters").get<std::size_t>();
    r.dropped_score_three = j.at("dropped").at("score_three").get<std::size_t>();
    for (const auto& row : j.at("rows")) {
      MethodResult m;
      m.spec.regressor = row.at("method").get<std::string>();
      m.spec.features = row.at("features").get<std::string>();
      m.fold_accuracy_pct = row.at("fold_accuracy_pct").get<std::vector<double>>();
      m.mean_accuracy_pct = row.at("mean_accuracy_pct").get<double>();
      m.sem_pct = row.at("sem_pct").get<double>();
      r.rows.push_back(std::move(m));
    }
    if (j.contains("timing_seconds")) r.timing_seconds = j["timing_seconds"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("report: malformed fields: ") + e.what());
  }
  return r;
}

std::string Report::render_table() const {
  std::ostringstream out;
  out << "Cross-validated regression accuracy (" << folds << " folds, +-" << margin
      << " margin, seed " << seed << ")\n";
  out << "Method   Features   Acc.% (SEM%)\n";
  out << "--------------------------------\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-8s %-10s %.2f (%.2f)\n", r.spec.regressor.c_str(),
                  r.spec.features.c_str(), r.mean_accuracy_pct, r.sem_pct);
    out << buf;
  }
  return out.str();
}

namespace {

// seed derivation tags, one per pipeline stage
constexpr std::uint64_t kTagFolds = 0x464f4c44;
constexpr std::uint64_t kTagBalance = 0x42414c41;
constexpr std::uint64_t kTagAugment = 0x4155474d;
constexpr std::uint64_t kTagCnn = 0x434e4e31;
constexpr std::uint64_t kTagSubsample = 0x53554253;

struct CachedSample {
  ProjectionTensor tensor;
  double score = 0.0;
  int label = 0;
  std::array<std::optional<double>, 6> attributes;
  std::string id;
};

struct PoolEntry {
  const ProjectionTensor* tensor;
  const CachedSample* source;
};

bool needs_cnn(const ExperimentConfig& cfg) {
  for (const auto& r : cfg.rows) {
    if (r.features == "cnn" || r.features == "fused") return true;
  }
  return false;
}

std::array<double, 6> require_attributes(const CachedSample& s) {
  for (int i = 0; i < 6; ++i) {
    if (!s.attributes[i]) {
      throw DataError("sample " + s.id + ": missing attribute " + kAttributeNames[i]);
    }
  }
  std::array<double, 6> out{};
  for (int i = 0; i < 6; ++i) out[i] = *s.attributes[i];
  return out;
}

struct RegressionSet {
  Matrix train_x;
  std::vector<double> train_y;
  Matrix test_x;
  Matrix val_x;
  std::vector<double> val_y;
};

double population_std(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

Matrix rows_to_matrix(const std::vector<std::vector<double>>& rows) {
  Matrix m(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].begin(), rows[i].end(), m.row(i));
  }
  return m;
}

std::vector<double> fit_predict_gp(const ExperimentConfig& cfg, const RegressionSet& set) {
  KernelConfig kc;
  kc.length_scale = median_heuristic(set.train_x);
  const double y_std = population_std(set.train_y);
  kc.sigma_f = std::max(y_std, 1e-6);
  kc.sigma_n = std::max(cfg.gp_sigma_n_scale * y_std, 1e-9);
  if (cfg.gp_grid_search) kc = grid_search(set.train_x, set.train_y, kc);
  const GPModel model = fit(set.train_x, set.train_y, kc);
  return predict(model, set.test_x).mean;
}

// Hyperparameter selection on the validation carve-out; falls back to the
// training set when the carve-out is empty. First grid entry wins ties.
template <typename FitFn>
std::vector<double> select_and_predict(const ExperimentConfig& cfg, const RegressionSet& set,
                                       const std::vector<FitFn>& candidates) {
  const bool has_val = set.val_x.rows > 0;
  const Matrix& score_x = has_val ? set.val_x : set.train_x;
  const std::vector<double>& score_y = has_val ? set.val_y : set.train_y;
  double best_acc = -1.0;
  LinearModel best_model;
  for (const auto& cand : candidates) {
    LinearModel m = cand();
    const double acc =
        margin_accuracy(predict_linear(m, score_x), score_y, cfg.margin);
    if (acc > best_acc) {
      best_acc = acc;
      best_model = std::move(m);
    }
  }
  return predict_linear(best_model, set.test_x);
}

std::vector<double> fit_predict_linear(const ExperimentConfig& cfg, const std::string& kind,
                                       const RegressionSet& set) {
  if (kind == "lasso" || kind == "enet") {
    const double lmax = lasso_lambda_max(set.train_x, set.train_y);
    std::vector<double> lambdas;
    for (int i = 0; i < 10; ++i) lambdas.push_back(lmax * std::pow(10.0, -3.0 * i / 9.0));
    std::vector<std::function<LinearModel()>> candidates;
    if (kind == "lasso") {
      for (double l : lambdas) {
        candidates.push_back([&set, l] { return fit_lasso(set.train_x, set.train_y, l, 1e-6, 2000); });
      }
    } else {
      for (double a : {0.25, 0.5, 0.75}) {
        for (double l : lambdas) {
          candidates.push_back(
              [&set, l, a] { return fit_elastic_net(set.train_x, set.train_y, l, a, 1e-6, 2000); });
        }
      }
    }
    return select_and_predict(cfg, set, candidates);
  }
  if (kind == "svr") {
    std::vector<std::function<LinearModel()>> candidates;
    for (double c : {0.1, 1.0, 10.0}) {
      for (double eps : {0.05, 0.1, 0.2}) {
        candidates.push_back(
            [&set, c, eps] { return fit_svr(set.train_x, set.train_y, c, eps, 1e-4, 200); });
      }
    }
    return select_and_predict(cfg, set, candidates);
  }
  throw DataError("unknown regressor: " + kind);
}

}  // namespace

ProjectionTensor sample_tensor(const std::string& volume_path, const std::array<int, 3>& center,
                               const std::string& manifest_dir, int patch_side,
                               double resample_mm) {
  const std::string vpath = (std::filesystem::path(manifest_dir) / volume_path).string();
  Volume vol = load_volume(vpath);
  const std::array<double, 3> spacing = vol.spacing;
  vol = resample_isotropic(vol, resample_mm);
  std::array<int, 3> mapped_center{};
  for (int i = 0; i < 3; ++i) {
    const double mapped = (center[i] + 0.5) * spacing[i] / resample_mm - 0.5;
    mapped_center[i] = static_cast<int>(std::clamp(std::lround(mapped), 0L,
                                                   static_cast<long>(vol.dims[i] - 1)));
  }
  return compose_tensor(extract_patch(vol, mapped_center, patch_side));
}

Report run_experiment(const ExperimentConfig& cfg, std::vector<FoldTrace>* trace) {
  const auto t_start = std::chrono::steady_clock::now();
  cfg.validate();

  const std::string manifest_dir = std::filesystem::path(cfg.manifest).parent_path().string();
  const auto records = load_manifest(cfg.manifest);
  const ConsensusResult consensus = consensus_label(records);
  if (consensus.samples.empty()) {
    throw DataError("experiment: no usable samples after consensus labeling");
  }

  // fold-independent: load, resample, crop and project every sample once
  std::map<std::string, CachedSample> cache;
  for (const auto& s : consensus.samples) {
    CachedSample cs;
    cs.tensor = sample_tensor(s.volume_path, s.center, manifest_dir, cfg.patch_side,
                              cfg.resample_mm);
    cs.score = s.consensus_score;
    cs.label = s.label == NoduleClass::Malignant ? 1 : 0;
    cs.attributes = s.attributes;
    cs.id = s.id;
    cache.emplace(s.id, std::move(cs));
  }

  const FoldPlan plan = make_folds(consensus.samples, cfg.folds, derive_seed(cfg.seed, kTagFolds));

  Report report;
  report.config_echo = cfg.echo();
  report.seed = cfg.seed;
  report.folds = cfg.folds;
  report.margin = cfg.margin;
  report.dropped_few_raters = consensus.dropped_few_raters;
  report.dropped_score_three = consensus.dropped_score_three;
  report.rows.resize(cfg.rows.size());
  for (std::size_t r = 0; r < cfg.rows.size(); ++r) report.rows[r].spec = cfg.rows[r];
  if (trace) trace->assign(static_cast<std::size_t>(cfg.folds), {});

  const bool train_cnn = needs_cnn(cfg);

  for (int f = 0; f < cfg.folds; ++f) {
    try {
      const std::set<std::string> test_ids(plan.folds[static_cast<std::size_t>(f)].begin(),
                                           plan.folds[static_cast<std::size_t>(f)].end());
      std::vector<LabeledSample> train_pool;
      for (const auto& s : consensus.samples) {
        if (!test_ids.count(s.id)) train_pool.push_back(s);
      }
      const std::vector<std::string> balanced_ids =
          balance(train_pool, derive_seed(cfg.seed, kTagBalance, static_cast<std::uint64_t>(f)));

      // training pool: originals plus augmented copies, all on the training side
      std::deque<ProjectionTensor> augmented_store;
      std::vector<PoolEntry> pool;
      for (const auto& id : balanced_ids) {
        const CachedSample& src = cache.at(id);
        pool.push_back({&src.tensor, &src});
        if (cfg.augment_count > 0) {
          AugmentConfig acfg = cfg.augment;
          acfg.count = cfg.augment_count;
          acfg.seed = derive_seed(derive_seed(cfg.seed, kTagAugment, static_cast<std::uint64_t>(f)),
                                  fnv1a64(id));
          for (auto& aug : augment_set(src.tensor, acfg)) {
            augmented_store.push_back(std::move(aug));
            pool.push_back({&augmented_store.back(), &src});
          }
        }
      }

      // CNN training with its validation carve-out
      const std::uint64_t cnn_seed = derive_seed(cfg.seed, kTagCnn, static_cast<std::uint64_t>(f));
      NetworkConfig net_cfg = cfg.net;
      net_cfg.input_side = cfg.patch_side;
      TrainConfig tr_cfg = cfg.train_cfg;
      tr_cfg.seed = cnn_seed;
      tr_cfg.threads = cfg.threads;

      NetworkParams params;
      std::vector<std::size_t> val_indices;
      if (train_cnn) {
        std::vector<TrainSample> train_data(pool.size());
        for (std::size_t i = 0; i < pool.size(); ++i) {
          train_data[i] = {pool[i].tensor, pool[i].source->label};
        }
        TrainResult tr = train(train_data, net_cfg, tr_cfg);
        params = std::move(tr.params);
        val_indices = std::move(tr.val_indices);
      } else {
        val_indices = validation_split(pool.size(), tr_cfg.validation_fraction, cnn_seed);
      }
      const std::set<std::size_t> val_set(val_indices.begin(), val_indices.end());

      // regressor subsample from the non-validation part of the pool
      std::vector<std::size_t> fit_pool;
      for (std::size_t i = 0; i < pool.size(); ++i) {
        if (!val_set.count(i)) fit_pool.push_back(i);
      }
      Rng sub_rng(derive_seed(cfg.seed, kTagSubsample, static_cast<std::uint64_t>(f)));
      sub_rng.shuffle(fit_pool);
      if (fit_pool.size() > static_cast<std::size_t>(cfg.subsample)) {
        fit_pool.resize(static_cast<std::size_t>(cfg.subsample));
      }

      const std::vector<std::string>& test_order = plan.folds[static_cast<std::size_t>(f)];

      // features, computed once per kind used by the configured rows
      std::map<std::string, RegressionSet> sets;
      for (const auto& row : cfg.rows) {
        if (sets.count(row.features)) continue;
        const bool use_cnn = row.features != "attr";
        const bool use_attr = row.features != "cnn";
        std::vector<std::vector<double>> train_raw;
        std::vector<double> train_y;
        train_raw.reserve(fit_pool.size());
        for (std::size_t i : fit_pool) {
          FeatureVector feat;
          std::array<double, 6> attrs{};
          if (use_cnn) feat = extract_features(params, *pool[i].tensor);
          if (use_attr) attrs = require_attributes(*pool[i].source);
          train_raw.push_back(concat_features(use_cnn ? &feat : nullptr,
                                              use_attr ? &attrs : nullptr));
          train_y.push_back(pool[i].source->score);
        }
        const FeatureStats stats = compute_stats(train_raw);

        RegressionSet set;
        std::vector<std::vector<double>> fused;
        fused.reserve(train_raw.size());
        for (std::size_t i = 0; i < train_raw.size(); ++i) {
          std::vector<double> z = train_raw[i];
          for (std::size_t j = 0; j < z.size(); ++j) {
            z[j] = stats.std[j] > 0.0 ? (z[j] - stats.mean[j]) / stats.std[j] : 0.0;
          }
          fused.push_back(std::move(z));
        }
        set.train_x = rows_to_matrix(fused);
        set.train_y = std::move(train_y);

        std::vector<std::vector<double>> test_rows;
        for (const auto& id : test_order) {
          const CachedSample& src = cache.at(id);
          FeatureVector feat;
          std::array<double, 6> attrs{};
          if (use_cnn) feat = extract_features(params, src.tensor);
          if (use_attr) attrs = require_attributes(src);
          test_rows.push_back(fuse_features(use_cnn ? &feat : nullptr,
                                            use_attr ? &attrs : nullptr, stats));
        }
        set.test_x = rows_to_matrix(test_rows);

        // validation features only when some row of this kind tunes on them
        const bool needs_selection =
            std::any_of(cfg.rows.begin(), cfg.rows.end(), [&](const MethodSpec& m) {
              return m.features == row.features && m.regressor != "gp";
            });
        if (needs_selection) {
          std::vector<std::vector<double>> val_rows;
          for (std::size_t i : val_indices) {
            FeatureVector feat;
            std::array<double, 6> attrs{};
            if (use_cnn) feat = extract_features(params, *pool[i].tensor);
            if (use_attr) attrs = require_attributes(*pool[i].source);
            val_rows.push_back(fuse_features(use_cnn ? &feat : nullptr,
                                             use_attr ? &attrs : nullptr, stats));
            set.val_y.push_back(pool[i].source->score);
          }
          set.val_x = rows_to_matrix(val_rows);
        }
        sets.emplace(row.features, std::move(set));
      }

      std::vector<double> test_scores;
      for (const auto& id : test_order) test_scores.push_back(cache.at(id).score);

      for (std::size_t r = 0; r < cfg.rows.size(); ++r) {
        const MethodSpec& spec = cfg.rows[r];
        const RegressionSet& set = sets.at(spec.features);
        std::vector<double> preds;
        if (spec.regressor == "gp") {
          preds = fit_predict_gp(cfg, set);
        } else {
          preds = fit_predict_linear(cfg, spec.regressor, set);
        }
        report.rows[r].fold_accuracy_pct.push_back(
            100.0 * margin_accuracy(preds, test_scores, cfg.margin));
      }

      if (trace) {
        FoldTrace& ft = (*trace)[static_cast<std::size_t>(f)];
        ft.test_ids = test_order;
        ft.balanced_train_ids = balanced_ids;
        std::set<std::string> reg_ids, sel_ids;
        for (std::size_t i : fit_pool) reg_ids.insert(pool[i].source->id);
        for (std::size_t i : val_indices) sel_ids.insert(pool[i].source->id);
        ft.regressor_train_ids.assign(reg_ids.begin(), reg_ids.end());
        ft.selection_ids.assign(sel_ids.begin(), sel_ids.end());
      }
    } catch (const NumericError& e) {
      throw NumericError("fold " + std::to_string(f) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("fold " + std::to_string(f) + ": " + e.what());
    }
  }

  for (auto& row : report.rows) {
    double mean = 0.0;
    for (double v : row.fold_accuracy_pct) mean += v;
    row.mean_accuracy_pct = mean / static_cast<double>(row.fold_accuracy_pct.size());
    row.sem_pct = sem(row.fold_accuracy_pct);
  }
  report.timing_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return report;
}

TrainResult train_on_manifest(const ExperimentConfig& cfg) {
  if (cfg.manifest.empty()) throw DataError("train: manifest is required");
  const std::string manifest_dir = std::filesystem::path(cfg.manifest).parent_path().string();
  const ConsensusResult consensus = consensus_label(load_manifest(cfg.manifest));
  if (consensus.samples.empty()) throw DataError("train: no usable samples");

  const std::vector<std::string> balanced_ids =
      balance(consensus.samples, derive_seed(cfg.seed, kTagBalance, 0));
  const std::set<std::string> keep(balanced_ids.begin(), balanced_ids.end());

  std::deque<ProjectionTensor> store;
  std::vector<TrainSample> data;
  for (const auto& s : consensus.samples) {
    if (!keep.count(s.id)) continue;
    store.push_back(
        sample_tensor(s.volume_path, s.center, manifest_dir, cfg.patch_side, cfg.resample_mm));
    const ProjectionTensor& original = store.back();
    const int label = s.label == NoduleClass::Malignant ? 1 : 0;
    data.push_back({&original, label});
    if (cfg.augment_count > 0) {
      AugmentConfig acfg = cfg.augment;
      acfg.count = cfg.augment_count;
      acfg.seed = derive_seed(derive_seed(cfg.seed, kTagAugment, 0), fnv1a64(s.id));
      for (auto& aug : augment_set(original, acfg)) {
        store.push_back(std::move(aug));
        data.push_back({&store.back(), label});
      }
    }
  }

  NetworkConfig net_cfg = cfg.net;
  net_cfg.input_side = cfg.patch_side;
  TrainConfig tr_cfg = cfg.train_cfg;
  tr_cfg.seed = derive_seed(cfg.seed, kTagCnn, 0);
  tr_cfg.threads = cfg.threads;
  return train(data, net_cfg, tr_cfg);
}

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void save_feature_csv(const FeatureTable& table, const std::string& path) {
  if (table.ids.size() != table.x.rows || table.scores.size() != table.x.rows) {
    throw DataError("feature csv: inconsistent row counts");
  }
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw DataError("cannot open feature csv for writing: " + path);
  out << "id,score";
  for (std::size_t j = 0; j < table.x.cols; ++j) out << ",f" << j;
  out << "\n";
  for (std::size_t i = 0; i < table.x.rows; ++i) {
    out << table.ids[i] << "," << fmt_double(table.scores[i]);
    const double* row = table.x.row(i);
    for (std::size_t j = 0; j < table.x.cols; ++j) out << "," << fmt_double(row[j]);
    out << "\n";
  }
  if (!out) throw DataError("short feature csv write: " + path);
}

FeatureTable load_feature_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("feature csv not found: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("feature csv is empty: " + path);
  const auto header = split(trim(line), ',');
  if (header.size() < 3 || header[0] != "id" || header[1] != "score") {
    throw DataError("feature csv line 1: expected header id,score,f0,...");
  }
  const std::size_t d = header.size() - 2;

  FeatureTable table;
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto cells = split(stripped, ',');
    if (cells.size() != d + 2) {
      throw DataError("feature csv line " + std::to_string(line_no) + ": expected " +
                      std::to_string(d + 2) + " cells, got " + std::to_string(cells.size()));
    }
    table.ids.push_back(cells[0]);
    table.scores.push_back(to_double(cells[1], "score"));
    for (std::size_t j = 0; j < d; ++j) values.push_back(to_double(cells[2 + j], "feature"));
  }
  table.x = Matrix(table.ids.size(), d);
  std::copy(values.begin(), values.end(), table.x.data.begin());
  return table;
}

void save_predictions_csv(const std::vector<std::string>& ids, const std::vector<double>& mean,
                          const std::vector<double>& variance, const std::string& path) {
  if (ids.size() != mean.size() || ids.size() != variance.size()) {
    throw DataError("predictions csv: inconsistent lengths");
  }
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw DataError("cannot open predictions csv for writing: " + path);
  out << "id,mean,variance\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out << ids[i] << "," << fmt_double(mean[i]) << "," << fmt_double(variance[i]) << "\n";
  }
  if (!out) throw DataError("short predictions csv write: " + path);
}

}  // namespace nodule
