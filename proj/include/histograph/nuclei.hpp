#pragma once

#include <optional>

#include "histograph/image.hpp"
#include "histograph/stain.hpp"

namespace histograph::nuclei {

struct NucleiParams {
    int min_area = 20;
    int max_area = 5000;
    double sigma = 2.0;       // smoothing of the hematoxylin channel
    int peak_distance = 5;    // minimum marker separation
    /// Stain vectors used for deconvolution; the default profile when unset.
    std::optional<stain::StainMatrix> stains;

    void validate() const;
};

/// Hematoxylin concentration scaled so its 99th percentile (over pixels with
/// positive concentration) maps to 255, clamped to [0, 255].
GrayImage hematoxylin_channel(const Image& img, const stain::StainMatrix& stains);

/// Markers for the watershed: distance-transform peaks at least
/// `min_distance` apart, strongest first, ties in (row, col) order.
std::vector<std::pair<int, int>> find_peaks(const std::vector<double>& dist, int height, int width,
                                            int min_distance);

/// Flood from `markers` over foreground pixels in decreasing distance order.
/// Returns labels 1..markers.size() (0 outside the flooded area).
LabelMap watershed(const std::vector<double>& dist, const GrayImage& foreground,
                   const std::vector<std::pair<int, int>>& markers);

struct NucleiResult {
    LabelMap labels;
    EntityTable entities;
};

/// Classical detector: deconvolution, blur, Otsu, distance transform,
/// marker watershed and an area filter. `tissue` optionally restricts
/// detection to mask pixels > 0.
NucleiResult detect_nuclei(const Image& img, const NucleiParams& params = {},
                           const LabelMap* tissue = nullptr);

}  // namespace histograph::nuclei
