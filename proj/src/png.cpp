#include "nodule/png.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include "nodule/error.hpp"

namespace nodule {

namespace {

std::uint32_t crc32_of(const std::string& data) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (unsigned char ch : data) crc = table[(crc ^ ch) & 0xFF] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

std::uint32_t adler32_of(const std::string& data) {
  std::uint32_t a = 1, b = 0;
  for (unsigned char ch : data) {
    a = (a + ch) % 65521u;
    b = (b + a) % 65521u;
  }
  return (b << 16) | a;
}

void append_u32be(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>(v & 0xFF));
}

void append_chunk(std::string& out, const char type[4], const std::string& data) {
  append_u32be(out, static_cast<std::uint32_t>(data.size()));
  std::string body(type, 4);
  body += data;
  out += body;
  append_u32be(out, crc32_of(body));
}

}  // namespace

void write_png_gray8(const std::string& path, int width, int height,
                     const std::vector<std::uint8_t>& pixels) {
  if (width <= 0 || height <= 0 ||
      pixels.size() != static_cast<std::size_t>(width) * height) {
    throw DataError("png: pixel buffer does not match dimensions");
  }
  // raw scanlines, each prefixed by filter byte 0
  std::string raw;
  raw.reserve(static_cast<std::size_t>(height) * (width + 1));
  for (int r = 0; r < height; ++r) {
    raw.push_back('\0');
    raw.append(reinterpret_cast<const char*>(pixels.data()) +
                   static_cast<std::size_t>(r) * width,
               static_cast<std::size_t>(width));
  }

  // zlib stream with stored deflate blocks
  std::string z;
  z.push_back('\x78');
  z.push_back('\x01');
  std::size_t pos = 0;
  while (pos < raw.size() || raw.empty()) {
    std::size_t n = std::min<std::size_t>(raw.size() - pos, 65535);
    bool final = pos + n == raw.size();
    z.push_back(final ? '\x01' : '\x00');
    z.push_back(static_cast<char>(n & 0xFF));
    z.push_back(static_cast<char>((n >> 8) & 0xFF));
    z.push_back(static_cast<char>(~n & 0xFF));
    z.push_back(static_cast<char>((~n >> 8) & 0xFF));
    z.append(raw, pos, n);
    pos += n;
    if (final) break;
  }
  append_u32be(z, adler32_of(raw));

  std::string png("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  append_u32be(ihdr, static_cast<std::uint32_t>(width));
  append_u32be(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);     // bit depth
  ihdr.push_back(0);     // grayscale
  ihdr.push_back(0);     // deflate
  ihdr.push_back(0);     // adaptive filtering
  ihdr.push_back(0);     // no interlace
  append_chunk(png, "IHDR", ihdr);
  append_chunk(png, "IDAT", z);
  append_chunk(png, "IEND", "");

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("png: cannot open for writing: " + path);
  out.write(png.data(), static_cast<std::streamsize>(png.size()));
  if (!out) throw DataError("png: short write: " + path);
}

void write_png_normalized(const std::string& path, const Image& img) {
  const auto [mn_it, mx_it] = std::minmax_element(img.pix.begin(), img.pix.end());
  const double lo = *mn_it, hi = *mx_it;
  const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
  std::vector<std::uint8_t> bytes(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    bytes[i] = static_cast<std::uint8_t>(std::lround((img.pix[i] - lo) * scale));
  }
  write_png_gray8(path, img.cols, img.rows, bytes);
}

}  // namespace nodule
