#pragma once

#include <cstdint>
#include <vector>

#include "nodule/image.hpp"
#include "nodule/rng.hpp"

namespace nodule {

enum class NoiseKind { Gaussian = 0, Poisson = 1, SaltPepper = 2, Speckle = 3 };

struct AugmentConfig {
  int count = 50;                    // samples generated per input tensor
  double scale_up = 1.25;            // > 1
  double scale_down = 0.8;           // in (0, 1)
  double gaussian_mean_range = 0.05; // mean drawn uniformly in +-frac * range
  double gaussian_sigma = 0.02;      // std as fraction of intensity range
  double sp_fraction = 0.02;         // salt & pepper pixel fraction per channel
  double speckle_sigma = 0.1;        // multiplicative noise std
  std::uint64_t seed = 0;

  void validate() const;  // throws DataError on invariant violation
};

// Rotate every channel about the image center by `angle_deg`, bilinear
// sampling with border replication. Multiples of 90 degrees snap to exact
// lattice permutations.
ProjectionTensor rotate(const ProjectionTensor& t, double angle_deg);

// Resample channels by `factor` about the image center (bilinear). factor > 1
// enlarges and center-crops back to S x S; factor < 1 shrinks and pads by
// border replication. Implemented as a single inverse mapping with clamping.
ProjectionTensor rescale(const ProjectionTensor& t, double factor);

// Apply one noise model. Draw order is documented per kind so tests can
// replay the generator:
//   gaussian: one uniform for the mean, then one normal per pixel
//             (channels in order, row-major within channel);
//   poisson: one draw per pixel, lambda = 255 * (v - min) / range;
//   salt_pepper: per channel, a shuffle of pixel indices, then one uniform
//                per corrupted pixel for the salt/pepper choice;
//   speckle: one normal per pixel.
// Intensity range and minimum are taken over the whole tensor for gaussian
// and poisson, per channel for salt_pepper.
ProjectionTensor add_noise(const ProjectionTensor& t, NoiseKind kind,
                           const AugmentConfig& cfg, Rng& rng);

// Generate cfg.count augmented tensors. Sample i uses a generator seeded with
// derive_seed(cfg.seed, i) and composes one rotation (uniform in [0, 360)),
// one of {no scale, scale_up, scale_down}, and one of the four noise kinds.
std::vector<ProjectionTensor> augment_set(const ProjectionTensor& t, const AugmentConfig& cfg);

}  // namespace nodule
