#include "histograph/superpixel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <set>
#include <string>
#include <tuple>

#include "histograph/color.hpp"
#include "histograph/error.hpp"
#include "histograph/filters.hpp"

namespace histograph::superpixel {

void SlicParams::validate() const {
    if (k < 1) throw InvalidArgument("slic: k must be >= 1");
    if (!(compactness > 0.0)) throw InvalidArgument("slic: compactness must be > 0");
    if (max_iters < 1) throw InvalidArgument("slic: max_iters must be >= 1");
    if (min_size_fraction < 0.0) throw InvalidArgument("slic: min_size_fraction must be >= 0");
}

void MergeParams::validate() const {
    if (threshold < 0.0) throw InvalidArgument("merge: threshold must be >= 0");
    if (min_regions < 1) throw InvalidArgument("merge: min_regions must be >= 1");
}

namespace {

struct Center {
    Lab lab;
    double row, col;
};

double sq(double x) { return x * x; }

double lab_sq(const Lab& a, const Lab& b) { return sq(a[0] - b[0]) + sq(a[1] - b[1]) + sq(a[2] - b[2]); }

std::vector<Center> seed_centers(const std::vector<Lab>& lab, int h, int w, int k) {
    const int nx = std::max(1, static_cast<int>(std::lround(std::sqrt(double(k) * w / h))));
    const int ny = std::max(1, static_cast<int>(std::lround(double(k) / nx)));
    const auto at = [&](int r, int c) -> const Lab& {
        return lab[static_cast<std::size_t>(std::clamp(r, 0, h - 1)) * w + std::clamp(c, 0, w - 1)];
    };
    const auto gradient = [&](int r, int c) {
        return lab_sq(at(r, c + 1), at(r, c - 1)) + lab_sq(at(r + 1, c), at(r - 1, c));
    };
    std::vector<Center> centers;
    for (int i = 0; i < ny; ++i) {
        for (int j = 0; j < nx; ++j) {
            // grid cell centre in pixel-centre coordinates; it only snaps to
            // a neighbour with a strictly lower gradient
            const double rf = (i + 0.5) * h / ny - 0.5, cf = (j + 0.5) * w / nx - 0.5;
            const int r0 = std::clamp(static_cast<int>(std::lround(rf)), 0, h - 1);
            const int c0 = std::clamp(static_cast<int>(std::lround(cf)), 0, w - 1);
            int br = r0, bc = c0;
            double best = gradient(r0, c0);
            for (int dr = -1; dr <= 1; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    const int r = r0 + dr, c = c0 + dc;
                    if (r < 0 || r >= h || c < 0 || c >= w) continue;
                    const double g = gradient(r, c);
                    if (g < best) {
                        best = g;
                        br = r;
                        bc = c;
                    }
                }
            }
            if (br == r0 && bc == c0) centers.push_back({at(r0, c0), rf, cf});
            else centers.push_back({at(br, bc), double(br), double(bc)});
        }
    }
    return centers;
}

// Absorbs 4-connected components smaller than `min_size` into their largest
// neighbouring component, then relabels in raster order.
LabelMap enforce_connectivity(const LabelMap& assigned, double min_size) {
    const int h = assigned.height(), w = assigned.width();
    std::vector<std::int32_t> comp(assigned.pixel_count(), -1);
    std::vector<std::int64_t> size;
    std::vector<std::size_t> stack;
    for (std::size_t start = 0; start < comp.size(); ++start) {
        if (comp[start] >= 0) continue;
        const auto id = static_cast<std::int32_t>(size.size());
        const auto label = assigned.labels()[start];
        std::int64_t n = 0;
        comp[start] = id;
        stack.push_back(start);
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            ++n;
            const int r = static_cast<int>(p / w), c = static_cast<int>(p % w);
            const std::size_t nb[4] = {p - w, p + w, p - 1, p + 1};
            const bool ok[4] = {r > 0, r < h - 1, c > 0, c < w - 1};
            for (int k = 0; k < 4; ++k) {
                if (ok[k] && comp[nb[k]] < 0 && assigned.labels()[nb[k]] == label) {
                    comp[nb[k]] = id;
                    stack.push_back(nb[k]);
                }
            }
        }
        size.push_back(n);
    }

    const LabelMap comp_map(h, w, [&] {
        std::vector<std::int32_t> v(comp.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = comp[i] + 1;
        return v;
    }());
    std::vector<std::vector<std::int32_t>> neighbours(size.size());
    for (const auto& [a, b] : label_adjacency(comp_map, 4)) {
        neighbours[a - 1].push_back(b - 1);
        neighbours[b - 1].push_back(a - 1);
    }

    std::vector<std::int32_t> parent(size.size());
    std::iota(parent.begin(), parent.end(), 0);
    const auto find = [&](std::int32_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    std::vector<std::int64_t> merged_size = size;
    for (std::size_t c = 0; c < size.size(); ++c) {
        if (static_cast<double>(size[c]) >= min_size) continue;
        const auto self = find(static_cast<std::int32_t>(c));
        std::int32_t target = -1;
        for (auto n : neighbours[c]) {
            const auto root = find(n);
            if (root == self) continue;
            if (target < 0 || merged_size[root] > merged_size[target] ||
                (merged_size[root] == merged_size[target] && root < target)) {
                target = root;
            }
        }
        if (target < 0) continue;
        parent[self] = target;
        merged_size[target] += merged_size[self];
    }

    std::vector<std::int32_t> out(comp.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = find(comp[i]) + 1;
    return relabel_sequential(LabelMap(h, w, std::move(out)));
}

}  // namespace

LabelMap slic(const Image& img, const SlicParams& params) {
    params.validate();
    const int h = img.height(), w = img.width();
    if (static_cast<std::size_t>(params.k) > img.pixel_count()) {
        throw InvalidArgument("slic: k = " + std::to_string(params.k) + " exceeds the pixel count");
    }
    const auto lab = image_to_lab(img);
    const double spacing = std::sqrt(static_cast<double>(img.pixel_count()) / params.k);
    const int radius = static_cast<int>(std::ceil(spacing));
    const double spatial_weight = sq(params.compactness / spacing);
    auto centers = seed_centers(lab, h, w, params.k);

    std::vector<std::int32_t> label(img.pixel_count(), 0);
    std::vector<double> best(img.pixel_count());
    for (int it = 0; it < params.max_iters; ++it) {
        std::fill(best.begin(), best.end(), std::numeric_limits<double>::infinity());
        for (std::size_t k = 0; k < centers.size(); ++k) {
            const auto& ctr = centers[k];
            const int cr = static_cast<int>(std::lround(ctr.row));
            const int cc = static_cast<int>(std::lround(ctr.col));
            for (int r = std::max(0, cr - radius); r <= std::min(h - 1, cr + radius); ++r) {
                for (int c = std::max(0, cc - radius); c <= std::min(w - 1, cc + radius); ++c) {
                    const std::size_t p = static_cast<std::size_t>(r) * w + c;
                    const double d = lab_sq(lab[p], ctr.lab) +
                                     (sq(r - ctr.row) + sq(c - ctr.col)) * spatial_weight;
                    if (d < best[p]) {
                        best[p] = d;
                        label[p] = static_cast<std::int32_t>(k + 1);
                    }
                }
            }
        }
        std::vector<std::array<double, 6>> acc(centers.size(), std::array<double, 6>{});
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) {
                const std::size_t p = static_cast<std::size_t>(r) * w + c;
                if (label[p] == 0) continue;
                auto& a = acc[static_cast<std::size_t>(label[p] - 1)];
                a[0] += lab[p][0];
                a[1] += lab[p][1];
                a[2] += lab[p][2];
                a[3] += r;
                a[4] += c;
                a[5] += 1.0;
            }
        }
        for (std::size_t k = 0; k < centers.size(); ++k) {
            const auto& a = acc[k];
            if (a[5] == 0.0) continue;
            centers[k] = {{a[0] / a[5], a[1] / a[5], a[2] / a[5]}, a[3] / a[5], a[4] / a[5]};
        }
    }
    return enforce_connectivity(LabelMap(h, w, std::move(label)), params.min_size_fraction * sq(spacing));
}

LabelMap merge_superpixels(const Image& img, const LabelMap& regions, const MergeParams& params) {
    params.validate();
    if (regions.height() != img.height() || regions.width() != img.width()) {
        throw InvalidArgument("merge: label map size does not match the image");
    }
    const auto lab = image_to_lab(img);
    const auto n = static_cast<std::size_t>(regions.max_label()) + 1;
    std::vector<std::array<double, 3>> sum(n, std::array<double, 3>{});
    std::vector<double> count(n, 0.0);
    for (std::size_t p = 0; p < lab.size(); ++p) {
        const auto l = static_cast<std::size_t>(regions.labels()[p]);
        for (int c = 0; c < 3; ++c) sum[l][c] += lab[p][c];
        count[l] += 1.0;
    }
    std::vector<std::set<std::int32_t>> adj(n);
    for (const auto& [a, b] : label_adjacency(regions, 4)) {
        adj[a].insert(b);
        adj[b].insert(a);
    }
    std::vector<char> alive(n, 0);
    int remaining = 0;
    for (std::size_t l = 1; l < n; ++l) {
        if (count[l] > 0) {
            alive[l] = 1;
            ++remaining;
        }
    }
    const auto mean = [&](std::size_t l) {
        return Lab{sum[l][0] / count[l], sum[l][1] / count[l], sum[l][2] / count[l]};
    };
    std::vector<std::uint32_t> version(n, 0);
    using Entry = std::tuple<double, std::int32_t, std::int32_t, std::uint32_t, std::uint32_t>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
    const auto push = [&](std::int32_t a, std::int32_t b) {
        if (a > b) std::swap(a, b);
        heap.emplace(lab_distance(mean(a), mean(b)), a, b, version[a], version[b]);
    };
    for (std::size_t a = 1; a < n; ++a) {
        for (auto b : adj[a]) {
            if (static_cast<std::size_t>(b) > a) push(static_cast<std::int32_t>(a), b);
        }
    }

    std::vector<std::int32_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    while (!heap.empty() && remaining > params.min_regions) {
        const auto [d, a, b, va, vb] = heap.top();
        heap.pop();
        if (!alive[a] || !alive[b] || va != version[a] || vb != version[b]) continue;
        if (!(d < params.threshold)) break;
        // b folds into a (a < b)
        for (int c = 0; c < 3; ++c) sum[a][c] += sum[b][c];
        count[a] += count[b];
        alive[b] = 0;
        parent[b] = a;
        --remaining;
        ++version[a];
        for (auto x : adj[b]) {
            adj[x].erase(b);
            if (x != a) {
                adj[x].insert(a);
                adj[a].insert(x);
            }
        }
        adj[a].erase(b);
        adj[b].clear();
        for (auto x : adj[a]) push(a, x);
    }

    const auto find = [&](std::int32_t x) {
        while (parent[x] != x) x = parent[x];
        return x;
    };
    LabelMap out(regions.height(), regions.width());
    auto dst = out.labels();
    for (std::size_t p = 0; p < dst.size(); ++p) dst[p] = find(regions.labels()[p]);
    return relabel_sequential(out);
}

}  // namespace histograph::superpixel
