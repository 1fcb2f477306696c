#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "nodule/image.hpp"

namespace nodule {

// 3D scalar field with per-axis voxel spacing in mm. Voxels are stored
// x-fastest: index = x + nx*(y + ny*z).
struct Volume {
  std::array<int, 3> dims{0, 0, 0};        // nx, ny, nz
  std::array<double, 3> spacing{1, 1, 1};  // mm per voxel
  std::vector<double> voxels;

  Volume() = default;
  Volume(int nx, int ny, int nz, double fill = 0.0)
      : dims{nx, ny, nz},
        voxels(static_cast<std::size_t>(nx) * ny * nz, fill) {}

  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * z);
  }
  double& at(int x, int y, int z) { return voxels[index(x, y, z)]; }
  double at(int x, int y, int z) const { return voxels[index(x, y, z)]; }
  bool is_cubic() const { return dims[0] == dims[1] && dims[1] == dims[2]; }
  double min_value() const;
};

enum class Axis { X = 0, Y = 1, Z = 2 };

// RVOL container: "RVL1" | nx,ny,nz u32le | sx,sy,sz f32le | voxels f32le
// x-fastest. Voxels are widened to double in memory.
Volume load_volume(const std::string& path);
void save_volume(const Volume& vol, const std::string& path);

// Resample to isotropic `target_mm` spacing with trilinear interpolation and
// edge clamping. Output dims are round(n_i * s_i / target) clamped to >= 1.
// Input and output grids are aligned at voxel centers: output voxel j sits at
// physical (j + 0.5) * target along each axis, input voxel x at (x + 0.5) * s.
Volume resample_isotropic(const Volume& vol, double target_mm = 0.5);

// Cubic patch of odd side `side` centered on `center` (voxel indices).
// Out-of-bounds voxels take the source volume's minimum intensity.
Volume extract_patch(const Volume& vol, const std::array<int, 3>& center, int side);

// Per-line median along `axis` of a cubic patch. Even line lengths use the
// mean of the two middle values. Output image axes keep the remaining two
// volume axes in (x, y, z) order: X -> (y, z), Y -> (x, z), Z -> (x, y).
Image median_projection(const Volume& patch, Axis axis);

// Channels 0, 1, 2 are the projections along x, y, z.
ProjectionTensor compose_tensor(const Volume& patch);

// PTN container for projection tensors: "PTN1" | S u32le | 3*S*S f32le,
// channels in order, row-major within channel.
ProjectionTensor load_tensor(const std::string& path);
void save_tensor(const ProjectionTensor& t, const std::string& path);

}  // namespace nodule
