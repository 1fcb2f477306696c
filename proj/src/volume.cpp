#include "nodule/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "nodule/error.hpp"

namespace nodule {

namespace {

std::uint32_t read_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

float read_f32le(const unsigned char* p) {
  std::uint32_t u = read_u32le(p);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

void append_u32le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

void append_f32le(std::string& out, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  append_u32le(out, u);
}

std::string read_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw VolumeIoError(VolumeIoError::Kind::MissingFile, 0,
                        std::string(what) + " file not found: " + path);
  }
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return buf;
}

void write_file(const std::string& path, const std::string& buf, const char* what) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw VolumeIoError(VolumeIoError::Kind::WriteFailed, 0,
                        std::string("cannot open ") + what + " for writing: " + path);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) {
    throw VolumeIoError(VolumeIoError::Kind::WriteFailed, 0,
                        std::string("short write to ") + what + ": " + path);
  }
}

}  // namespace

double Volume::min_value() const {
  double m = std::numeric_limits<double>::infinity();
  for (double v : voxels) m = std::min(m, v);
  return m;
}

Volume load_volume(const std::string& path) {
  const std::string buf = read_file(path, "RVOL");
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  if (buf.size() < 4 || std::memcmp(buf.data(), "RVL1", 4) != 0) {
    throw VolumeIoError(VolumeIoError::Kind::BadMagic, 0,
                        "bad RVOL magic at byte 0 in " + path);
  }
  if (buf.size() < 28) {
    throw VolumeIoError(VolumeIoError::Kind::Truncated, buf.size(),
                        "RVOL header truncated at byte " + std::to_string(buf.size()) +
                            " in " + path);
  }
  Volume vol;
  for (int i = 0; i < 3; ++i) {
    std::uint32_t n = read_u32le(p + 4 + 4 * i);
    if (n == 0) {
      throw VolumeIoError(VolumeIoError::Kind::BadHeader, 4 + 4 * i,
                          "zero dimension in RVOL header (field n" +
                              std::string(1, "xyz"[i]) + ") in " + path);
    }
    vol.dims[i] = static_cast<int>(n);
  }
  for (int i = 0; i < 3; ++i) {
    float s = read_f32le(p + 16 + 4 * i);
    if (!(s > 0.0f) || !std::isfinite(s)) {
      throw VolumeIoError(VolumeIoError::Kind::BadHeader, 16 + 4 * i,
                          "non-positive spacing in RVOL header (field s" +
                              std::string(1, "xyz"[i]) + ") in " + path);
    }
    vol.spacing[i] = s;
  }
  const std::size_t count = static_cast<std::size_t>(vol.dims[0]) * vol.dims[1] * vol.dims[2];
  const std::size_t need = 28 + 4 * count;
  if (buf.size() < need) {
    throw VolumeIoError(VolumeIoError::Kind::Truncated, buf.size(),
                        "RVOL payload truncated at byte " + std::to_string(buf.size()) +
                            " (need " + std::to_string(need) + ") in " + path);
  }
  vol.voxels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    float f = read_f32le(p + 28 + 4 * i);
    if (!std::isfinite(f)) {
      throw VolumeIoError(VolumeIoError::Kind::NonFiniteVoxel, 28 + 4 * i,
                          "non-finite voxel at byte " + std::to_string(28 + 4 * i) +
                              " in " + path);
    }
    vol.voxels[i] = f;
  }
  return vol;
}

void save_volume(const Volume& vol, const std::string& path) {
  std::string buf;
  buf.reserve(28 + 4 * vol.voxels.size());
  buf.append("RVL1", 4);
  for (int i = 0; i < 3; ++i) append_u32le(buf, static_cast<std::uint32_t>(vol.dims[i]));
  for (int i = 0; i < 3; ++i) append_f32le(buf, static_cast<float>(vol.spacing[i]));
  for (double v : vol.voxels) append_f32le(buf, static_cast<float>(v));
  write_file(path, buf, "RVOL");
}

Volume resample_isotropic(const Volume& vol, double target_mm) {
  if (!(target_mm > 0.0)) {
    throw DataError("resample target must be > 0, got " + std::to_string(target_mm));
  }
  Volume out;
  for (int i = 0; i < 3; ++i) {
    long n = std::lround(vol.dims[i] * vol.spacing[i] / target_mm);
    out.dims[i] = static_cast<int>(std::max(1L, n));
    out.spacing[i] = target_mm;
  }
  out.voxels.resize(static_cast<std::size_t>(out.dims[0]) * out.dims[1] * out.dims[2]);

  const int nx = vol.dims[0], ny = vol.dims[1], nz = vol.dims[2];
  auto clampi = [](int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); };

  std::size_t idx = 0;
  for (int z = 0; z < out.dims[2]; ++z) {
    double fz = (z + 0.5) * target_mm / vol.spacing[2] - 0.5;
    int z0 = clampi(static_cast<int>(std::floor(fz)), nz - 1);
    int z1 = clampi(z0 + 1, nz - 1);
    double wz = std::clamp(fz - std::floor(fz), 0.0, 1.0);
    if (fz < 0) wz = 0.0;
    for (int y = 0; y < out.dims[1]; ++y) {
      double fy = (y + 0.5) * target_mm / vol.spacing[1] - 0.5;
      int y0 = clampi(static_cast<int>(std::floor(fy)), ny - 1);
      int y1 = clampi(y0 + 1, ny - 1);
      double wy = std::clamp(fy - std::floor(fy), 0.0, 1.0);
      if (fy < 0) wy = 0.0;
      for (int x = 0; x < out.dims[0]; ++x, ++idx) {
        double fx = (x + 0.5) * target_mm / vol.spacing[0] - 0.5;
        int x0 = clampi(static_cast<int>(std::floor(fx)), nx - 1);
        int x1 = clampi(x0 + 1, nx - 1);
        double wx = std::clamp(fx - std::floor(fx), 0.0, 1.0);
        if (fx < 0) wx = 0.0;

        double c00 = vol.at(x0, y0, z0) * (1 - wx) + vol.at(x1, y0, z0) * wx;
        double c10 = vol.at(x0, y1, z0) * (1 - wx) + vol.at(x1, y1, z0) * wx;
        double c01 = vol.at(x0, y0, z1) * (1 - wx) + vol.at(x1, y0, z1) * wx;
        double c11 = vol.at(x0, y1, z1) * (1 - wx) + vol.at(x1, y1, z1) * wx;
        double c0 = c00 * (1 - wy) + c10 * wy;
        double c1 = c01 * (1 - wy) + c11 * wy;
        out.voxels[idx] = c0 * (1 - wz) + c1 * wz;
      }
    }
  }
  return out;
}

Volume extract_patch(const Volume& vol, const std::array<int, 3>& center, int side) {
  if (side < 3 || side % 2 == 0) {
    throw DataError("patch side must be odd and >= 3, got " + std::to_string(side));
  }
  for (int i = 0; i < 3; ++i) {
    if (center[i] < 0 || center[i] >= vol.dims[i]) {
      throw DataError("patch center outside volume bounds on axis " +
                      std::string(1, "xyz"[i]) + ": " + std::to_string(center[i]));
    }
  }
  const double fill = vol.min_value();
  const int half = (side - 1) / 2;
  Volume patch(side, side, side, fill);
  patch.spacing = vol.spacing;
  for (int z = 0; z < side; ++z) {
    int sz = center[2] - half + z;
    if (sz < 0 || sz >= vol.dims[2]) continue;
    for (int y = 0; y < side; ++y) {
      int sy = center[1] - half + y;
      if (sy < 0 || sy >= vol.dims[1]) continue;
      for (int x = 0; x < side; ++x) {
        int sx = center[0] - half + x;
        if (sx < 0 || sx >= vol.dims[0]) continue;
        patch.at(x, y, z) = vol.at(sx, sy, sz);
      }
    }
  }
  return patch;
}

namespace {

double median_of(std::vector<double>& line) {
  std::sort(line.begin(), line.end());
  const std::size_t n = line.size();
  if (n % 2 == 1) return line[n / 2];
  return 0.5 * (line[n / 2 - 1] + line[n / 2]);
}

}  // namespace

Image median_projection(const Volume& patch, Axis axis) {
  if (!patch.is_cubic()) {
    throw DataError("median_projection requires a cubic patch");
  }
  const int s = patch.dims[0];
  Image out(s, s);
  std::vector<double> line(static_cast<std::size_t>(s));
  for (int a = 0; a < s; ++a) {
    for (int b = 0; b < s; ++b) {
      for (int t = 0; t < s; ++t) {
        switch (axis) {
          case Axis::X: line[t] = patch.at(t, a, b); break;  // out(y, z)
          case Axis::Y: line[t] = patch.at(a, t, b); break;  // out(x, z)
          case Axis::Z: line[t] = patch.at(a, b, t); break;  // out(x, y)
        }
      }
      out.at(a, b) = median_of(line);
    }
  }
  return out;
}

ProjectionTensor compose_tensor(const Volume& patch) {
  if (!patch.is_cubic()) {
    throw DataError("compose_tensor requires a cubic patch");
  }
  ProjectionTensor t;
  t.side = patch.dims[0];
  t.channels[0] = median_projection(patch, Axis::X);
  t.channels[1] = median_projection(patch, Axis::Y);
  t.channels[2] = median_projection(patch, Axis::Z);
  return t;
}

ProjectionTensor load_tensor(const std::string& path) {
  const std::string buf = read_file(path, "PTN");
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  if (buf.size() < 4 || std::memcmp(buf.data(), "PTN1", 4) != 0) {
    throw VolumeIoError(VolumeIoError::Kind::BadMagic, 0,
                        "bad PTN magic at byte 0 in " + path);
  }
  if (buf.size() < 8) {
    throw VolumeIoError(VolumeIoError::Kind::Truncated, buf.size(),
                        "PTN header truncated in " + path);
  }
  const std::uint32_t s = read_u32le(p + 4);
  if (s == 0) {
    throw VolumeIoError(VolumeIoError::Kind::BadHeader, 4, "zero side in PTN header in " + path);
  }
  const std::size_t count = 3ull * s * s;
  const std::size_t need = 8 + 4 * count;
  if (buf.size() < need) {
    throw VolumeIoError(VolumeIoError::Kind::Truncated, buf.size(),
                        "PTN payload truncated at byte " + std::to_string(buf.size()) +
                            " (need " + std::to_string(need) + ") in " + path);
  }
  ProjectionTensor t(static_cast<int>(s));
  std::size_t i = 0;
  for (auto& ch : t.channels) {
    for (auto& v : ch.pix) {
      float f = read_f32le(p + 8 + 4 * i);
      if (!std::isfinite(f)) {
        throw VolumeIoError(VolumeIoError::Kind::NonFiniteVoxel, 8 + 4 * i,
                            "non-finite value at byte " + std::to_string(8 + 4 * i) +
                                " in " + path);
      }
      v = f;
      ++i;
    }
  }
  return t;
}

void save_tensor(const ProjectionTensor& t, const std::string& path) {
  std::string buf;
  buf.reserve(8 + 12ull * t.side * t.side);
  buf.append("PTN1", 4);
  append_u32le(buf, static_cast<std::uint32_t>(t.side));
  for (const auto& ch : t.channels) {
    for (double v : ch.pix) append_f32le(buf, static_cast<float>(v));
  }
  write_file(path, buf, "PTN");
}

}  // namespace nodule
