#include "histograph/nuclei.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <tuple>

#include "histograph/error.hpp"
#include "histograph/filters.hpp"
#include "histograph/stats.hpp"

namespace histograph::nuclei {

void NucleiParams::validate() const {
    if (min_area <= 0 || min_area >= max_area) {
        throw InvalidArgument("nuclei: need 0 < min_area < max_area");
    }
    if (!(sigma > 0.0)) throw InvalidArgument("nuclei: sigma must be > 0");
    if (peak_distance < 1) throw InvalidArgument("nuclei: peak_distance must be >= 1");
}

GrayImage hematoxylin_channel(const Image& img, const stain::StainMatrix& stains) {
    const auto conc = stain::fit_concentrations(img, stains);
    std::vector<double> positive;
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        if (conc.values[2 * i] > 0.0) positive.push_back(conc.values[2 * i]);
    }
    GrayImage out(img.height(), img.width());
    if (positive.empty()) return out;
    const double scale = percentile(std::move(positive), 99.0);
    auto dst = out.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        const double v = 255.0 * conc.values[2 * i] / scale;
        dst[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
    return out;
}

std::vector<std::pair<int, int>> find_peaks(const std::vector<double>& dist, int height, int width,
                                            int min_distance) {
    const auto idx = [width](int r, int c) { return static_cast<std::size_t>(r) * width + c; };
    // separable square max filter of radius min_distance
    std::vector<double> rowmax(dist.size()), winmax(dist.size());
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            double m = 0.0;
            for (int k = std::max(0, c - min_distance); k <= std::min(width - 1, c + min_distance); ++k) {
                m = std::max(m, dist[idx(r, k)]);
            }
            rowmax[idx(r, c)] = m;
        }
    }
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            double m = 0.0;
            for (int k = std::max(0, r - min_distance); k <= std::min(height - 1, r + min_distance); ++k) {
                m = std::max(m, rowmax[idx(k, c)]);
            }
            winmax[idx(r, c)] = m;
        }
    }

    std::vector<std::tuple<double, int, int>> candidates;
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            const double d = dist[idx(r, c)];
            if (d > 0.0 && d == winmax[idx(r, c)]) candidates.emplace_back(-d, r, c);
        }
    }
    std::sort(candidates.begin(), candidates.end());

    std::vector<std::pair<int, int>> peaks;
    const double min_sq = static_cast<double>(min_distance) * min_distance;
    for (const auto& [neg, r, c] : candidates) {
        bool isolated = true;
        for (const auto& [pr, pc] : peaks) {
            const double dr = r - pr, dc = c - pc;
            if (dr * dr + dc * dc < min_sq) {
                isolated = false;
                break;
            }
        }
        if (isolated) peaks.emplace_back(r, c);
    }
    return peaks;
}

LabelMap watershed(const std::vector<double>& dist, const GrayImage& foreground,
                   const std::vector<std::pair<int, int>>& markers) {
    const int h = foreground.height(), w = foreground.width();
    LabelMap labels(h, w);
    // (priority, insertion order, pixel); deeper pixels flood first
    using Item = std::tuple<double, std::uint64_t, int, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    std::uint64_t order = 0;
    for (std::size_t m = 0; m < markers.size(); ++m) {
        const auto [r, c] = markers[m];
        if (foreground.at(r, c) == 0 || labels.at(r, c) != 0) continue;
        labels.at(r, c) = static_cast<std::int32_t>(m + 1);
        queue.emplace(-dist[static_cast<std::size_t>(r) * w + c], order++, r, c);
    }
    constexpr int dr[4] = {-1, 0, 0, 1};
    constexpr int dc[4] = {0, -1, 1, 0};
    while (!queue.empty()) {
        const auto [p, o, r, c] = queue.top();
        queue.pop();
        const std::int32_t label = labels.at(r, c);
        for (int k = 0; k < 4; ++k) {
            const int rr = r + dr[k], cc = c + dc[k];
            if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
            if (foreground.at(rr, cc) == 0 || labels.at(rr, cc) != 0) continue;
            labels.at(rr, cc) = label;
            queue.emplace(-dist[static_cast<std::size_t>(rr) * w + cc], order++, rr, cc);
        }
    }
    return labels;
}

NucleiResult detect_nuclei(const Image& img, const NucleiParams& params, const LabelMap* tissue) {
    params.validate();
    if (tissue && (tissue->height() != img.height() || tissue->width() != img.width())) {
        throw InvalidArgument("nuclei: tissue mask size does not match the image");
    }
    const int h = img.height(), w = img.width();
    const auto stains = params.stains.value_or(stain::default_profile().stains);
    const GrayImage blurred = gaussian_blur(hematoxylin_channel(img, stains), params.sigma);

    GrayImage fg(h, w);
    const auto hist = histogram(blurred);
    const bool single_valued = std::count_if(hist.begin(), hist.end(), [](auto n) { return n > 0; }) < 2;
    if (!single_valued) {
        const int t = otsu_threshold(hist);
        auto b = blurred.data();
        auto f = fg.data();
        for (std::size_t i = 0; i < f.size(); ++i) {
            const bool inside = !tissue || tissue->labels()[i] > 0;
            f[i] = (inside && b[i] > t) ? 255 : 0;
        }
    }

    const auto dist = distance_transform(fg);
    auto markers = find_peaks(dist, h, w, params.peak_distance);

    // Components whose maxima were all suppressed by a neighbour still need
    // a seed of their own.
    const LabelMap components = connected_components(fg, 4);
    std::vector<char> seeded(static_cast<std::size_t>(components.max_label()) + 1, 0);
    for (const auto& [r, c] : markers) seeded[static_cast<std::size_t>(components.at(r, c))] = 1;
    std::vector<double> best(seeded.size(), -1.0);
    std::vector<std::pair<int, int>> best_at(seeded.size());
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const auto l = static_cast<std::size_t>(components.at(r, c));
            if (l == 0 || seeded[l]) continue;
            const double d = dist[static_cast<std::size_t>(r) * w + c];
            if (d > best[l]) {
                best[l] = d;
                best_at[l] = {r, c};
            }
        }
    }
    for (std::size_t l = 1; l < seeded.size(); ++l) {
        if (!seeded[l]) markers.push_back(best_at[l]);
    }

    LabelMap labels = watershed(dist, fg, markers);
    std::vector<std::int64_t> area(markers.size() + 1, 0);
    for (auto l : labels.labels()) ++area[static_cast<std::size_t>(l)];
    for (auto& l : labels.labels()) {
        const auto a = area[static_cast<std::size_t>(l)];
        if (l != 0 && (a < params.min_area || a > params.max_area)) l = 0;
    }

    NucleiResult result;
    result.labels = relabel_sequential(labels);
    result.entities = entity_table(result.labels);
    return result;
}

}  // namespace histograph::nuclei
