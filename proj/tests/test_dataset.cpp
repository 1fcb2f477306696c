#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "doctest.h"
#include "nodule/dataset.hpp"
#include "nodule/error.hpp"
#include "oracles.hpp"

using namespace nodule;

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

constexpr const char* kHeader =
    "id,volume_path,cx,cy,cz,r1,r2,r3,r4,"
    "calcification,spiculation,lobulation,margin,sphericity,texture\n";

std::vector<LabeledSample> toy_samples(int benign, int malignant) {
  std::vector<LabeledSample> out;
  for (int i = 0; i < benign + malignant; ++i) {
    LabeledSample s;
    s.id = "s" + std::to_string(i);
    s.label = i < benign ? NoduleClass::Benign : NoduleClass::Malignant;
    s.consensus_score = i < benign ? 2.0 : 4.0;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST_CASE("manifest: blank cells become absent ratings and attributes") {
  oracle::TempDir dir("manifest");
  write_text(dir.file("m.csv"),
             std::string(kHeader) + "a1,v.rvol,10,11,12,4,5,,5,,,,,,\n");
  const auto records = load_manifest(dir.file("m.csv"));
  REQUIRE(records.size() == 1);
  CHECK(records[0].malignancy_ratings == std::vector<int>{4, 5, 5});
  for (const auto& a : records[0].attributes) CHECK_FALSE(a.has_value());
  CHECK(records[0].center == std::array<int, 3>{10, 11, 12});
}

TEST_CASE("manifest: out-of-range rating names the line") {
  oracle::TempDir dir("manifest");
  write_text(dir.file("m.csv"), std::string(kHeader) + "a1,v.rvol,0,0,0,7,,,,,,,,,\n");
  try {
    load_manifest(dir.file("m.csv"));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    CHECK(std::string(e.what()).find("7") != std::string::npos);
  }
}

TEST_CASE("manifest: header-only file gives an empty list, malformed rows are named") {
  oracle::TempDir dir("manifest");
  write_text(dir.file("empty.csv"), kHeader);
  CHECK(load_manifest(dir.file("empty.csv")).empty());

  write_text(dir.file("bad.csv"), std::string(kHeader) + "a1,v.rvol,1,2\n");
  try {
    load_manifest(dir.file("bad.csv"));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  write_text(dir.file("head.csv"), "id,volume\n");
  CHECK_THROWS_AS(load_manifest(dir.file("head.csv")), DataError);
  CHECK_THROWS_AS(load_manifest(dir.file("missing.csv")), DataError);
}

TEST_CASE("manifest: save/load round trip") {
  oracle::TempDir dir("manifest");
  NoduleRecord rec;
  rec.id = "x1";
  rec.volume_path = "x1.rvol";
  rec.center = {5, 6, 7};
  rec.malignancy_ratings = {2, 3, 4};
  rec.attributes[0] = 1.25;
  rec.attributes[5] = 4.75;
  save_manifest({rec}, dir.file("m.csv"));
  const auto records = load_manifest(dir.file("m.csv"));
  REQUIRE(records.size() == 1);
  CHECK(records[0].id == "x1");
  CHECK(records[0].malignancy_ratings == rec.malignancy_ratings);
  CHECK(records[0].attributes[0] == 1.25);
  CHECK(records[0].attributes[5] == 4.75);
  CHECK_FALSE(records[0].attributes[1].has_value());
}

TEST_CASE("consensus: averaging, the exclusion rule, and the rater minimum") {
  NoduleRecord benign;
  benign.id = "b";
  benign.malignancy_ratings = {2, 2, 3};
  NoduleRecord excluded;
  excluded.id = "e";
  excluded.malignancy_ratings = {3, 3, 3};
  NoduleRecord few;
  few.id = "f";
  few.malignancy_ratings = {5, 4};
  const ConsensusResult res = consensus_label({benign, excluded, few});
  REQUIRE(res.samples.size() == 1);
  CHECK(res.samples[0].id == "b");
  CHECK(res.samples[0].consensus_score == doctest::Approx(7.0 / 3.0).epsilon(1e-15));
  CHECK(res.samples[0].label == NoduleClass::Benign);
  CHECK(res.dropped_score_three == 1);
  CHECK(res.dropped_few_raters == 1);
}

TEST_CASE("consensus: exact-integer exclusion across rating combinations") {
  // enumerate all 3-rating combinations; survival iff sum != 9
  for (int a = 1; a <= 5; ++a) {
    for (int b = 1; b <= 5; ++b) {
      for (int c = 1; c <= 5; ++c) {
        NoduleRecord rec;
        rec.id = "t";
        rec.malignancy_ratings = {a, b, c};
        const ConsensusResult res = consensus_label({rec});
        if (a + b + c == 9) {
          CHECK(res.samples.empty());
        } else {
          REQUIRE(res.samples.size() == 1);
          const double score = (a + b + c) / 3.0;
          CHECK(res.samples[0].label ==
                (score < 3.0 ? NoduleClass::Benign : NoduleClass::Malignant));
        }
      }
    }
  }
  // average-3 cases that a float test could miss, e.g. sum 12 of 4 raters
  NoduleRecord four;
  four.id = "q";
  four.malignancy_ratings = {1, 3, 3, 5};
  CHECK(consensus_label({four}).samples.empty());
}

TEST_CASE("folds: stratified partition with spread at most one") {
  const auto samples = toy_samples(12, 8);
  const FoldPlan plan = make_folds(samples, 10, 99);
  REQUIRE(plan.folds.size() == 10);

  std::set<std::string> seen;
  std::set<std::string> benign_ids;
  for (int i = 0; i < 12; ++i) benign_ids.insert("s" + std::to_string(i));
  for (const auto& fold : plan.folds) {
    CHECK(fold.size() == 2);
    int benign = 0;
    for (const auto& id : fold) {
      CHECK(seen.insert(id).second);  // disjoint
      if (benign_ids.count(id)) ++benign;
    }
    CHECK(benign >= 1);
    CHECK(benign <= 2);
  }
  CHECK(seen.size() == 20);  // covering

  const FoldPlan again = make_folds(samples, 10, 99);
  CHECK(plan.folds == again.folds);
  const FoldPlan other = make_folds(samples, 10, 100);
  CHECK(plan.folds != other.folds);

  CHECK_THROWS_AS(make_folds(samples, 21, 1), DataError);
  CHECK_THROWS_AS(make_folds(samples, 1, 1), DataError);
}

TEST_CASE("folds: uneven counts keep the size spread at one") {
  const auto samples = toy_samples(13, 9);  // 22 over 4 folds -> 6,6,5,5
  const FoldPlan plan = make_folds(samples, 4, 7);
  std::size_t lo = 100, hi = 0, total = 0;
  for (const auto& fold : plan.folds) {
    lo = std::min(lo, fold.size());
    hi = std::max(hi, fold.size());
    total += fold.size();
  }
  CHECK(total == 22);
  CHECK(hi - lo <= 1);
}

TEST_CASE("balance: equal class counts drawn from the input ids") {
  const auto samples = toy_samples(12, 8);
  const auto ids = balance(samples, 5);
  CHECK(ids.size() == 16);
  std::set<std::string> in_pool;
  for (const auto& s : samples) in_pool.insert(s.id);
  int benign = 0;
  for (const auto& id : ids) {
    CHECK(in_pool.count(id));
    if (std::stoi(id.substr(1)) < 12) ++benign;
  }
  CHECK(benign == 8);

  CHECK(balance(samples, 5) == ids);      // deterministic
  CHECK(balance(samples, 6) != ids);      // seed-sensitive
  CHECK_THROWS_AS(balance(toy_samples(5, 0), 1), DataError);
}

TEST_CASE("attribute_vector: fixed order, named missing attribute") {
  LabeledSample s;
  s.id = "a";
  for (int i = 0; i < 6; ++i) s.attributes[i] = 3.0;
  const auto all3 = attribute_vector(s);
  for (double v : all3) CHECK(v == 3.0);

  s.attributes = {1.0, 2.0, 3.0, 4.0, 5.0, 1.5};
  const auto v = attribute_vector(s);
  CHECK(v[1] == 2.0);  // spiculation lands at index 1
  CHECK(v[5] == 1.5);

  s.attributes[5].reset();
  try {
    attribute_vector(s);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("texture") != std::string::npos);
  }
}

TEST_CASE("synth: latent score is exactly centered at neutral attributes") {
  CHECK(latent_score({3.0, 3.0, 3.0, 3.0, 3.0, 3.0}) == 3.0);
  // direction checks: spiculation raises, calcification lowers
  CHECK(latent_score({3, 5, 3, 3, 3, 3}) > 3.0);
  CHECK(latent_score({5, 3, 3, 3, 3, 3}) < 3.0);
}

TEST_CASE("synth: zero noise overrides give ratings equal to the latent score") {
  Rng rng(11);
  const NoduleParams p = draw_nodule_params(rng, 0.0, 0.0);
  CHECK(p.latent_malignancy == doctest::Approx(std::clamp(latent_score(p.attributes), 1.0, 5.0))
                                   .epsilon(1e-15));
  for (int r : p.ratings) {
    CHECK(r == static_cast<int>(std::clamp(std::lround(p.latent_malignancy), 1L, 5L)));
  }
}

TEST_CASE("synth: generation is byte-identical across runs") {
  oracle::TempDir a("syntha");
  oracle::TempDir b("synthb");
  SynthConfig cfg;
  cfg.count = 8;
  cfg.side = 9;
  cfg.seed = 77;
  cfg.out_dir = a.path().string();
  const std::string ma = synth_generate(cfg);
  cfg.out_dir = b.path().string();
  const std::string mb = synth_generate(cfg);
  CHECK(slurp(ma) == slurp(mb));
  CHECK(slurp(a.file("n00003.rvol")) == slurp(b.file("n00003.rvol")));
  CHECK_FALSE(slurp(a.file("n00003.rvol")).empty());

  // manifests load and label end to end
  const auto records = load_manifest(ma);
  CHECK(records.size() == 8);
  for (const auto& r : records) {
    CHECK(r.malignancy_ratings.size() == 3);
    for (const auto& attr : r.attributes) CHECK(attr.has_value());
  }
}

TEST_CASE("synth: rendered phantoms respond to attributes") {
  Rng rng_a(5), rng_b(5);
  // high texture, sharp margin vs low texture, soft margin
  const Volume solid = render_phantom({3, 3, 3, 5, 5, 5}, 21, rng_a);
  const Volume fuzzy = render_phantom({3, 3, 3, 1, 5, 1}, 21, rng_b);
  CHECK(solid.dims == std::array<int, 3>{21, 21, 21});
  // solid nodule has a brighter center
  CHECK(solid.at(10, 10, 10) > fuzzy.at(10, 10, 10));
  CHECK_THROWS_AS(render_phantom({3, 3, 3, 3, 3, 3}, 4, rng_a), DataError);
}

TEST_CASE("synth: unwritable output directory is a data error") {
  oracle::TempDir dir("synthbad");
  write_text(dir.file("blocker"), "not a directory");
  SynthConfig cfg;
  cfg.count = 1;
  cfg.side = 5;
  cfg.out_dir = dir.file("blocker") + "/sub";
  CHECK_THROWS_AS(synth_generate(cfg), DataError);
  cfg.out_dir = "";
  CHECK_THROWS_AS(synth_generate(cfg), DataError);
  cfg.out_dir = dir.file("ok");
  cfg.count = 0;
  CHECK_THROWS_AS(synth_generate(cfg), DataError);
  cfg.count = 1;
  cfg.side = 4;
  CHECK_THROWS_AS(synth_generate(cfg), DataError);
}

TEST_CASE("synth: OLS from true attributes recovers the latent score") {
  const int n = 500;
  Matrix x(n, 6);
  std::vector<double> y(n);
  Rng rng(2025);
  for (int i = 0; i < n; ++i) {
    const NoduleParams p = draw_nodule_params(rng, 0.3, 0.4);
    for (int j = 0; j < 6; ++j) x.at(i, j) = p.attributes[j];
    y[static_cast<std::size_t>(i)] = p.latent_malignancy;
  }
  const oracle::OlsFit fit = oracle::ols(x, y);
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    const double pred = oracle::ols_predict(fit, x.row(static_cast<std::size_t>(i)));
    if (std::fabs(pred - y[static_cast<std::size_t>(i)]) <= 1.0) ++hits;
  }
  CHECK(static_cast<double>(hits) / n >= 0.90);
}
