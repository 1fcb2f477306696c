#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nodule/image.hpp"

namespace nodule {

// Minimal 8-bit grayscale PNG writer (zlib stream with stored deflate
// blocks, no compression). Only used for visual inspection output.
void write_png_gray8(const std::string& path, int width, int height,
                     const std::vector<std::uint8_t>& pixels);

// Min-max normalize an image to 8-bit and write it. Constant images map to 0.
void write_png_normalized(const std::string& path, const Image& img);

}  // namespace nodule
