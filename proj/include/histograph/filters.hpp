#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "histograph/image.hpp"

namespace histograph {

/// Luminance round(0.299 R + 0.587 G + 0.114 B).
GrayImage to_gray(const Image& img);

/// Separable Gaussian blur, kernel radius ceil(3 sigma), normalized to sum 1,
/// edge-replicated borders. Output is rounded back to 8 bits.
GrayImage gaussian_blur(const GrayImage& img, double sigma);

/// Normalized 1-D Gaussian taps for `sigma` (length 2*ceil(3 sigma)+1).
std::vector<double> gaussian_kernel(double sigma);

using Histogram = std::array<std::uint64_t, 256>;

Histogram histogram(const GrayImage& img);

/// Otsu's threshold: t maximizing w0*w1*(mu0-mu1)^2 for the split
/// {0..t} / {t+1..255}. Ties go to the smallest t.
int otsu_threshold(const Histogram& hist);

/// Between-class variance of the split {0..t} / {t+1..255}.
double between_class_variance(const Histogram& hist, int t);

/// Labels nonzero pixels into maximal connected components numbered 1..L in
/// first-encounter raster order. `connectivity` is 4 or 8.
LabelMap connected_components(const GrayImage& binary, int connectivity);

/// Exact Euclidean distance from every foreground (nonzero) pixel to the
/// nearest background pixel; 0 on background. Pixels outside the raster
/// count as background.
std::vector<double> distance_transform(const GrayImage& binary);

/// Sorted distinct pairs (a, b), 0 < a < b, of labels that touch under
/// 4- or 8-adjacency.
std::vector<std::pair<std::int32_t, std::int32_t>> label_adjacency(const LabelMap& labels, int connectivity = 8);

}  // namespace histograph
