#include "nodule/augment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "nodule/error.hpp"

namespace nodule {

namespace {

constexpr double kPi = 3.14159265358979323846;

double sample_bilinear_clamped(const Image& img, double r, double c) {
  auto clampi = [](int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
  int r0 = static_cast<int>(std::floor(r));
  int c0 = static_cast<int>(std::floor(c));
  double wr = r - r0;
  double wc = c - c0;
  int r0c = clampi(r0, img.rows - 1);
  int r1c = clampi(r0 + 1, img.rows - 1);
  int c0c = clampi(c0, img.cols - 1);
  int c1c = clampi(c0 + 1, img.cols - 1);
  if (r < 0) wr = 0.0;
  if (c < 0) wc = 0.0;
  double top = img.at(r0c, c0c) * (1 - wc) + img.at(r0c, c1c) * wc;
  double bot = img.at(r1c, c0c) * (1 - wc) + img.at(r1c, c1c) * wc;
  return top * (1 - wr) + bot * wr;
}

void tensor_min_range(const ProjectionTensor& t, double& mn, double& range) {
  mn = std::numeric_limits<double>::infinity();
  double mx = -mn;
  for (const auto& ch : t.channels) {
    for (double v : ch.pix) {
      mn = std::min(mn, v);
      mx = std::max(mx, v);
    }
  }
  range = mx - mn;
}

}  // namespace

void AugmentConfig::validate() const {
  if (count < 1) throw DataError("augment count must be >= 1");
  if (!(scale_up > 1.0)) throw DataError("scale_up must be > 1");
  if (!(scale_down > 0.0 && scale_down < 1.0)) throw DataError("scale_down must be in (0,1)");
  if (gaussian_mean_range < 0.0 || gaussian_mean_range > 1.0 || gaussian_sigma < 0.0 ||
      gaussian_sigma > 1.0 || sp_fraction < 0.0 || sp_fraction > 1.0) {
    throw DataError("noise fractions must lie in [0,1]");
  }
  if (speckle_sigma < 0.0) throw DataError("speckle_sigma must be >= 0");
}

ProjectionTensor rotate(const ProjectionTensor& t, double angle_deg) {
  if (!std::isfinite(angle_deg)) throw DataError("rotation angle must be finite");
  double rad = angle_deg * kPi / 180.0;
  double c = std::cos(rad);
  double s = std::sin(rad);
  // snap near-exact lattice rotations so 90k degrees maps grid onto grid
  if (std::fabs(c) < 1e-12) c = 0.0;
  if (std::fabs(s) < 1e-12) s = 0.0;
  if (std::fabs(std::fabs(c) - 1.0) < 1e-12) c = std::copysign(1.0, c);
  if (std::fabs(std::fabs(s) - 1.0) < 1e-12) s = std::copysign(1.0, s);

  ProjectionTensor out(t.side);
  const double ctr = (t.side - 1) / 2.0;
  for (int ch = 0; ch < 3; ++ch) {
    const Image& src = t.channels[ch];
    Image& dst = out.channels[ch];
    for (int r = 0; r < t.side; ++r) {
      double v = r - ctr;
      for (int col = 0; col < t.side; ++col) {
        double u = col - ctr;
        double us = u * c - v * s;
        double vs = u * s + v * c;
        dst.at(r, col) = sample_bilinear_clamped(src, ctr + vs, ctr + us);
      }
    }
  }
  return out;
}

ProjectionTensor rescale(const ProjectionTensor& t, double factor) {
  if (!(factor > 0.0)) throw DataError("rescale factor must be > 0");
  ProjectionTensor out(t.side);
  const double ctr = (t.side - 1) / 2.0;
  for (int ch = 0; ch < 3; ++ch) {
    const Image& src = t.channels[ch];
    Image& dst = out.channels[ch];
    for (int r = 0; r < t.side; ++r) {
      double vs = ctr + (r - ctr) / factor;
      for (int col = 0; col < t.side; ++col) {
        double us = ctr + (col - ctr) / factor;
        dst.at(r, col) = sample_bilinear_clamped(src, vs, us);
      }
    }
  }
  return out;
}

ProjectionTensor add_noise(const ProjectionTensor& t, NoiseKind kind,
                           const AugmentConfig& cfg, Rng& rng) {
  ProjectionTensor out = t;
  switch (kind) {
    case NoiseKind::Gaussian: {
      double mn, range;
      tensor_min_range(t, mn, range);
      const double a = cfg.gaussian_mean_range * range;
      const double mu = rng.uniform(-a, a);
      const double sigma = cfg.gaussian_sigma * range;
      for (auto& ch : out.channels) {
        for (auto& v : ch.pix) v += rng.normal(mu, sigma);
      }
      break;
    }
    case NoiseKind::Poisson: {
      double mn, range;
      tensor_min_range(t, mn, range);
      if (!(range > 0.0)) {
        throw DataError("poisson noise requires a positive intensity range");
      }
      constexpr double k = 255.0;  // quantization level
      for (auto& ch : out.channels) {
        for (auto& v : ch.pix) {
          double lambda = std::max(v - mn, 0.0) / range * k;
          v = mn + static_cast<double>(rng.poisson(lambda)) / k * range;
        }
      }
      break;
    }
    case NoiseKind::SaltPepper: {
      for (auto& ch : out.channels) {
        const auto [mn_it, mx_it] = std::minmax_element(ch.pix.begin(), ch.pix.end());
        const double lo = *mn_it, hi = *mx_it;
        const auto n_px = static_cast<std::size_t>(
            std::lround(cfg.sp_fraction * static_cast<double>(ch.size())));
        std::vector<std::size_t> order(ch.size());
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        for (std::size_t i = 0; i < n_px; ++i) {
          ch.pix[order[i]] = rng.uniform() < 0.5 ? lo : hi;
        }
      }
      break;
    }
    case NoiseKind::Speckle: {
      for (auto& ch : out.channels) {
        for (auto& v : ch.pix) v *= 1.0 + rng.normal(0.0, cfg.speckle_sigma);
      }
      break;
    }
    default:
      throw DataError("unknown noise kind");
  }
  return out;
}

std::vector<ProjectionTensor> augment_set(const ProjectionTensor& t, const AugmentConfig& cfg) {
  cfg.validate();
  std::vector<ProjectionTensor> out;
  out.reserve(static_cast<std::size_t>(cfg.count));
  for (int i = 0; i < cfg.count; ++i) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(i)));
    const double angle = rng.uniform(0.0, 360.0);
    const std::uint64_t scale_pick = rng.uniform_int(3);  // 0 none, 1 up, 2 down
    const auto kind = static_cast<NoiseKind>(rng.uniform_int(4));

    ProjectionTensor sample = rotate(t, angle);
    if (scale_pick == 1) sample = rescale(sample, cfg.scale_up);
    else if (scale_pick == 2) sample = rescale(sample, cfg.scale_down);
    out.push_back(add_noise(sample, kind, cfg, rng));
  }
  return out;
}

}  // namespace nodule
