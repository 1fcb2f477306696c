#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <fstream>
#include <set>

#include "doctest.h"
#include "nodule/dataset.hpp"
#include "nodule/error.hpp"
#include "nodule/eval.hpp"
#include "oracles.hpp"

using namespace nodule;

namespace {

// small synthetic dataset + config that exercises the whole driver quickly
ExperimentConfig tiny_experiment(const std::string& out_dir, std::uint64_t seed) {
  SynthConfig synth;
  synth.count = 40;
  synth.side = 9;
  synth.seed = 123;
  synth.out_dir = out_dir;
  const std::string manifest = synth_generate(synth);

  ExperimentConfig cfg;
  cfg.manifest = manifest;
  cfg.folds = 2;
  cfg.seed = seed;
  cfg.patch_side = 9;
  cfg.augment_count = 2;
  cfg.net.conv = {{{4, 3, 1, 1}, {4, 3, 1, 1}, {4, 3, 1, 1}, {4, 3, 1, 1}, {4, 3, 1, 1}}};
  cfg.net.fc = {8, 4, 2};
  cfg.train_cfg.iterations = 25;
  cfg.train_cfg.batch_size = 8;
  cfg.subsample = 60;
  cfg.rows = {{"gp", "cnn"}, {"gp", "attr"}, {"gp", "fused"}, {"lasso", "cnn"}};
  cfg.threads = 2;
  return cfg;
}

}  // namespace

TEST_CASE("margin accuracy: rule, boundary, errors, symmetry") {
  CHECK(margin_accuracy({1.0, 2.0}, {1.0, 2.0}) == 1.0);
  CHECK(margin_accuracy({1.2, 4.9, 3.0}, {2.0, 3.0, 5.0}) == doctest::Approx(1.0 / 3.0));
  CHECK(margin_accuracy({2.0}, {3.0}) == 1.0);  // |diff| == margin counts
  CHECK(margin_accuracy({2.0}, {3.0000001}) == 0.0);
  CHECK(margin_accuracy({1.0, 1.0}, {1.0, 1.0}, 0.0) == 1.0);
  CHECK_THROWS_AS(margin_accuracy({}, {}), DataError);
  CHECK_THROWS_AS(margin_accuracy({1.0}, {1.0, 2.0}), DataError);

  // symmetric under joint permutation
  const std::vector<double> p{1.0, 2.5, 4.0, 3.3};
  const std::vector<double> l{2.2, 2.4, 2.0, 3.0};
  const std::vector<double> p2{3.3, 1.0, 4.0, 2.5};
  const std::vector<double> l2{3.0, 2.2, 2.0, 2.4};
  CHECK(margin_accuracy(p, l) == margin_accuracy(p2, l2));
}

TEST_CASE("sem: forced arithmetic and invariances") {
  CHECK(sem({80.0, 90.0}) == 5.0);
  CHECK(sem({75.0, 75.0, 75.0}) == 0.0);
  CHECK(sem({80.0, 90.0, 85.0}) == sem({85.0, 80.0, 90.0}));
  CHECK_THROWS_AS(sem({80.0}), DataError);
}

TEST_CASE("fuse: concatenation order, z-scoring, zero-variance handling") {
  std::vector<std::vector<double>> train;
  train.push_back({1.0, 10.0, 7.0});
  train.push_back({3.0, 20.0, 7.0});
  const FeatureStats stats = compute_stats(train);
  CHECK(stats.mean == std::vector<double>{2.0, 15.0, 7.0});
  CHECK(stats.std[2] == 0.0);

  FeatureVector cnn{10.0, 7.0};
  std::array<double, 6> attrs{1, 2, 3, 4, 5, 1};
  const auto raw = concat_features(&cnn, &attrs);
  REQUIRE(raw.size() == 8);
  CHECK(raw[0] == 1.0);  // attributes first
  CHECK(raw[6] == 10.0);

  const auto attrs_only = concat_features(nullptr, &attrs);
  CHECK(attrs_only.size() == 6);
  CHECK_THROWS_AS(concat_features(nullptr, nullptr), DataError);

  // a training sample equal to the mean fuses to all zeros
  FeatureVector at_mean{2.0, 15.0};
  std::vector<double> fused = fuse_features(&at_mean, nullptr,
                                            FeatureStats{{2.0, 15.0}, {1.0, 5.0}});
  CHECK(fused == std::vector<double>{0.0, 0.0});

  // zero-variance dimension passes through as zero
  FeatureVector v{5.0, 20.0, 9.0};
  const FeatureStats s3{{2.0, 15.0, 7.0}, {1.0, 5.0, 0.0}};
  const auto z = fuse_features(&v, nullptr, s3);
  CHECK(z[2] == 0.0);

  CHECK_THROWS_AS(fuse_features(&cnn, nullptr, s3), DataError);
}

TEST_CASE("experiment config: file parsing and validation") {
  oracle::TempDir dir("cfg");
  std::ofstream out(dir.file("exp.cfg"));
  out << "# comment line\n"
      << "manifest = data/manifest.csv\n"
      << "folds = 5\n"
      << "seed = 7\n"
      << "patch_side = 21\n"
      << "rows = gp:cnn , gp:fused\n"
      << "cnn_channels = 4,8,8,8,8\n"
      << "cnn_fc = 16,8,2\n"
      << "gp_grid_search = 1\n";
  out.close();
  const ExperimentConfig cfg = ExperimentConfig::from_file(dir.file("exp.cfg"));
  CHECK(cfg.manifest == "data/manifest.csv");
  CHECK(cfg.folds == 5);
  CHECK(cfg.seed == 7);
  CHECK(cfg.rows.size() == 2);
  CHECK(cfg.rows[1].features == "fused");
  CHECK(cfg.net.conv[0].out_channels == 4);
  CHECK(cfg.gp_grid_search);

  std::ofstream bad(dir.file("bad.cfg"));
  bad << "unknown_key = 1\n";
  bad.close();
  CHECK_THROWS_AS(ExperimentConfig::from_file(dir.file("bad.cfg")), DataError);

  ExperimentConfig invalid;
  invalid.manifest = "m.csv";
  invalid.patch_side = 8;
  CHECK_THROWS_AS(invalid.validate(), DataError);
  invalid.patch_side = 9;
  invalid.rows = {{"gp", "nope"}};
  CHECK_THROWS_AS(invalid.validate(), DataError);
}

TEST_CASE("experiment: deterministic, leakage-free, internally consistent") {
  oracle::TempDir dir("exp");
  const ExperimentConfig cfg = tiny_experiment(dir.path().string(), 11);

  std::vector<FoldTrace> trace;
  const Report a = run_experiment(cfg, &trace);
  const Report b = run_experiment(cfg);
  CHECK(a.to_json() == b.to_json());

  REQUIRE(a.rows.size() == 4);
  for (const auto& row : a.rows) {
    REQUIRE(row.fold_accuracy_pct.size() == 2);
    double mean = 0.0;
    for (double v : row.fold_accuracy_pct) mean += v;
    mean /= 2.0;
    CHECK(std::fabs(mean - row.mean_accuracy_pct) < 1e-12);
    CHECK(row.sem_pct == sem(row.fold_accuracy_pct));
    for (double acc : row.fold_accuracy_pct) {
      CHECK(acc >= 0.0);
      CHECK(acc <= 100.0);
    }
  }

  // no test-set leakage: training-side id sets never touch the test fold
  REQUIRE(trace.size() == 2);
  std::set<std::string> all_test;
  for (const auto& ft : trace) {
    const std::set<std::string> test(ft.test_ids.begin(), ft.test_ids.end());
    for (const auto& id : ft.balanced_train_ids) CHECK_FALSE(test.count(id));
    for (const auto& id : ft.regressor_train_ids) CHECK_FALSE(test.count(id));
    for (const auto& id : ft.selection_ids) CHECK_FALSE(test.count(id));
    const std::set<std::string> balanced(ft.balanced_train_ids.begin(),
                                         ft.balanced_train_ids.end());
    for (const auto& id : ft.regressor_train_ids) CHECK(balanced.count(id));
    for (const auto& id : ft.test_ids) all_test.insert(id);
  }
  CHECK(all_test.size() == trace[0].test_ids.size() + trace[1].test_ids.size());

  // different seed moves the folds
  ExperimentConfig other = cfg;
  other.seed = 12;
  const Report c = run_experiment(other);
  CHECK(a.to_json() != c.to_json());
}

TEST_CASE("experiment: report JSON round trip and rendering") {
  oracle::TempDir dir("exp2");
  ExperimentConfig cfg = tiny_experiment(dir.path().string(), 21);
  cfg.rows = {{"gp", "attr"}};
  cfg.gp_grid_search = true;
  const Report r = run_experiment(cfg);

  const std::string json = r.to_json();
  const Report parsed = Report::from_json_text(json);
  CHECK(parsed.to_json() == json);
  CHECK(parsed.rows.size() == 1);
  CHECK(parsed.rows[0].spec.regressor == "gp");

  const std::string table = r.render_table();
  CHECK(table.find("gp") != std::string::npos);
  CHECK(table.find("attr") != std::string::npos);

  // timing is serialized only on request so reports stay byte-reproducible
  CHECK(json.find("timing_seconds") == std::string::npos);
  CHECK(r.to_json(true).find("timing_seconds") != std::string::npos);

  CHECK_THROWS_AS(Report::from_json_text("{not json"), DataError);
  CHECK_THROWS_AS(Report::from_json_text("{\"schema\":\"other\"}"), DataError);
}

TEST_CASE("experiment: margin zero with exact predictions is exact") {
  // degenerate-margin contract on the metric itself
  CHECK(margin_accuracy({2.0, 4.0}, {2.0, 4.0}, 0.0) == 1.0);
}

TEST_CASE("experiment: module errors carry the fold index") {
  oracle::TempDir dir("expfold");
  ExperimentConfig cfg = tiny_experiment(dir.path().string(), 31);
  cfg.rows = {{"gp", "attr"}};

  // blank one attribute cell so the attr feature build fails inside a fold
  auto records = load_manifest(cfg.manifest);
  records[0].attributes[5].reset();
  save_manifest(records, cfg.manifest);
  try {
    run_experiment(cfg);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string what = e.what();
    CHECK(what.find("fold") != std::string::npos);
    CHECK(what.find("texture") != std::string::npos);
  }
}

TEST_CASE("feature csv: round trip and validation") {
  oracle::TempDir dir("fcsv");
  FeatureTable t;
  t.ids = {"a", "b"};
  t.scores = {2.5, 4.0};
  t.x = Matrix(2, 3);
  for (std::size_t i = 0; i < 6; ++i) t.x.data[i] = 0.5 * static_cast<double>(i);
  save_feature_csv(t, dir.file("f.csv"));
  const FeatureTable r = load_feature_csv(dir.file("f.csv"));
  CHECK(r.ids == t.ids);
  CHECK(r.scores == t.scores);
  CHECK(r.x.data == t.x.data);

  std::ofstream bad(dir.file("bad.csv"));
  bad << "wrong,header\n";
  bad.close();
  CHECK_THROWS_AS(load_feature_csv(dir.file("bad.csv")), DataError);

  save_predictions_csv({"a"}, {2.0}, {0.1}, dir.file("p.csv"));
  std::ifstream in(dir.file("p.csv"));
  std::string line;
  std::getline(in, line);
  CHECK(line == "id,mean,variance");
}
