#pragma once

#include "histograph/image.hpp"

namespace histograph::superpixel {

struct SlicParams {
    int k = 400;                      // target number of superpixels
    double compactness = 10.0;
    int max_iters = 10;
    double min_size_fraction = 0.25;  // of S^2, below which components are absorbed

    void validate() const;
};

/// SLIC in CIELAB. Returns a partition with connected labels 1..L.
LabelMap slic(const Image& img, const SlicParams& params = {});

struct MergeParams {
    double threshold = 8.0;  // CIELAB distance between region means
    int min_regions = 1;     // stop once this many regions remain

    void validate() const;
};

/// Greedy hierarchical merging of adjacent regions by mean-color distance,
/// closest pair first, ties by smaller (a, b). Output labels are contiguous.
LabelMap merge_superpixels(const Image& img, const LabelMap& regions, const MergeParams& params = {});

}  // namespace histograph::superpixel
