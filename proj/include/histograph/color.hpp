#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "histograph/image.hpp"

namespace histograph {

using Lab = std::array<double, 3>;

/// sRGB (8-bit) to CIELAB under D65.
Lab rgb_to_lab(std::uint8_t r, std::uint8_t g, std::uint8_t b);

/// Per-pixel CIELAB, row-major.
std::vector<Lab> image_to_lab(const Image& img);

double lab_distance(const Lab& a, const Lab& b);

}  // namespace histograph
