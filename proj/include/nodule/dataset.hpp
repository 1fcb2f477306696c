#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nodule/rng.hpp"
#include "nodule/volume.hpp"

namespace nodule {

// Attribute order is fixed everywhere: calcification, spiculation,
// lobulation, margin, sphericity, texture.
inline constexpr std::array<const char*, 6> kAttributeNames = {
    "calcification", "spiculation", "lobulation", "margin", "sphericity", "texture"};

struct NoduleRecord {
  std::string id;
  std::string volume_path;
  std::array<int, 3> center{0, 0, 0};
  std::vector<int> malignancy_ratings;              // 1..4 entries, each in [1,5]
  std::array<std::optional<double>, 6> attributes;  // each in [1,5] when present
};

enum class NoduleClass { Benign = 0, Malignant = 1 };

struct LabeledSample {
  std::string id;
  std::string volume_path;
  std::array<int, 3> center{0, 0, 0};
  double consensus_score = 0.0;  // mean radiologist rating, in [1,5]
  NoduleClass label = NoduleClass::Benign;
  std::array<std::optional<double>, 6> attributes;
};

struct ConsensusResult {
  std::vector<LabeledSample> samples;
  std::size_t dropped_few_raters = 0;  // fewer than 3 ratings
  std::size_t dropped_score_three = 0; // rating sum == 3 * count
};

struct FoldPlan {
  std::vector<std::vector<std::string>> folds;  // disjoint id lists
  std::uint64_t seed = 0;
};

// Manifest CSV: id,volume_path,cx,cy,cz,r1,r2,r3,r4,calcification,spiculation,
// lobulation,margin,sphericity,texture. r2..r4 and attributes may be blank.
std::vector<NoduleRecord> load_manifest(const std::string& path);
void save_manifest(const std::vector<NoduleRecord>& records, const std::string& path);

// Keeps records with >= 3 ratings whose rating sum differs from 3 * count
// (the exact-integer form of "average equals 3"); benign below 3, malignant
// above.
ConsensusResult consensus_label(const std::vector<NoduleRecord>& records);

// Stratified k-fold split: per-class seeded shuffles dealt round-robin with a
// cursor shared across classes, so fold sizes differ by at most one.
FoldPlan make_folds(const std::vector<LabeledSample>& samples, int k, std::uint64_t seed);

// Undersample the majority class uniformly without replacement to match the
// minority count. Returns ids.
std::vector<std::string> balance(const std::vector<LabeledSample>& pool, std::uint64_t seed);

// Packs the six attribute scores in fixed order; errors name the first
// missing attribute.
std::array<double, 6> attribute_vector(const LabeledSample& sample);

struct SynthConfig {
  int count = 100;
  int side = 41;
  std::uint64_t seed = 0;
  std::string out_dir;
  double latent_noise_std = 0.3;
  double rater_noise_std = 0.4;
};

// Attribute scores with the latent malignancy and simulated rater scores
// drawn from them.
struct NoduleParams {
  std::array<double, 6> attributes{};  // fixed order, each in [1,5]
  double latent_malignancy = 3.0;      // clamped to [1,5]
  std::array<int, 3> ratings{};        // simulated raters, each in [1,5]
};

// Deterministic part of the synthetic label model: a fixed linear map from
// centered attribute scores. These weights are constants of this generator,
// chosen so shape attributes carry signal.
double latent_score(const std::array<double, 6>& attributes);

// Draw attributes, latent malignancy and rater scores from one generator.
NoduleParams draw_nodule_params(Rng& rng, double latent_noise_std, double rater_noise_std);

// Render an ellipsoid phantom whose geometry tracks the attribute scores:
// sphericity sets the axis ratio, margin the edge sharpness, spiculation
// radial spikes, lobulation low-frequency surface bumps, calcification bright
// speckles, texture interior solidity and noise.
Volume render_phantom(const std::array<double, 6>& attributes, int side, Rng& rng);

// Write `count` phantom volumes plus manifest.csv into out_dir; returns the
// manifest path. Byte-identical output for identical configs.
std::string synth_generate(const SynthConfig& cfg);

}  // namespace nodule
