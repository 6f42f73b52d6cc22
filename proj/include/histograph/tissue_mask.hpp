#pragma once

#include "histograph/image.hpp"

namespace histograph::tissue {

struct TissueMaskParams {
    double sigma = 1.0;           // initial blur
    double growth = 2.0;          // sigma multiplier per iteration
    double stop_threshold = 10.0; // stop once 255 - mean(background) falls below this
    int max_iters = 5;

    void validate() const;
};

struct TissueMaskResult {
    LabelMap mask;  // 1 = tissue
    int iterations = 0;
    double background_mean = 255.0;
};

/// Repeated blur + Otsu; tissue is the darker class.
TissueMaskResult detect_tissue(const Image& img, const TissueMaskParams& params = {});

}  // namespace histograph::tissue
