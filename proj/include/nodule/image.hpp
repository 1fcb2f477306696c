#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace nodule {

// Dense 2D image, row-major, 64-bit values.
struct Image {
  int rows = 0;
  int cols = 0;
  std::vector<double> pix;

  Image() = default;
  Image(int r, int c, double fill = 0.0)
      : rows(r), cols(c), pix(static_cast<std::size_t>(r) * c, fill) {}

  double& at(int r, int c) { return pix[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return pix[static_cast<std::size_t>(r) * cols + c]; }
  std::size_t size() const { return pix.size(); }
};

// Three median projections of a cubic patch stacked as channels:
// channel 0 collapses x (image indexed by y,z), channel 1 collapses y (x,z),
// channel 2 collapses z (x,y).
struct ProjectionTensor {
  int side = 0;
  std::array<Image, 3> channels;

  ProjectionTensor() = default;
  explicit ProjectionTensor(int s, double fill = 0.0)
      : side(s), channels{Image(s, s, fill), Image(s, s, fill), Image(s, s, fill)} {}
};

}  // namespace nodule
