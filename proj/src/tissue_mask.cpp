#include "histograph/tissue_mask.hpp"

#include <string>

#include "histograph/error.hpp"
#include "histograph/filters.hpp"

namespace histograph::tissue {

void TissueMaskParams::validate() const {
    if (!(sigma > 0.0)) throw InvalidArgument("tissue mask: sigma must be > 0");
    if (!(growth >= 1.0)) throw InvalidArgument("tissue mask: growth must be >= 1");
    if (stop_threshold < 0.0 || stop_threshold > 255.0) {
        throw InvalidArgument("tissue mask: stop threshold must lie in [0, 255]");
    }
    if (max_iters < 1) throw InvalidArgument("tissue mask: max_iters must be >= 1");
}

TissueMaskResult detect_tissue(const Image& img, const TissueMaskParams& params) {
    params.validate();
    const GrayImage gray = to_gray(img);
    auto g = gray.data();

    TissueMaskResult result;
    double sigma = params.sigma;
    for (int it = 1; it <= params.max_iters; ++it) {
        const GrayImage blurred = gaussian_blur(gray, sigma);
        const auto hist = histogram(blurred);
        auto b = blurred.data();

        LabelMap mask(gray.height(), gray.width());
        auto m = mask.labels();
        // A single-valued histogram has no darker class to speak of.
        std::size_t occupied = 0;
        for (auto count : hist) occupied += count > 0;
        if (occupied > 1) {
            const int t = otsu_threshold(hist);
            for (std::size_t i = 0; i < b.size(); ++i) m[i] = b[i] <= t ? 1 : 0;
        }

        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (m[i] == 0) {
                sum += g[i];
                ++n;
            }
        }
        result.mask = std::move(mask);
        result.iterations = it;
        result.background_mean = n > 0 ? sum / static_cast<double>(n) : 0.0;
        if (255.0 - result.background_mean < params.stop_threshold) break;
        sigma *= params.growth;
    }
    return result;
}

}  // namespace histograph::tissue
