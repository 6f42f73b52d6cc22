#include "histograph/filters.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "histograph/error.hpp"

namespace histograph {

GrayImage to_gray(const Image& img) {
    GrayImage out(img.height(), img.width());
    auto src = img.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        const double y = 0.299 * src[3 * i] + 0.587 * src[3 * i + 1] + 0.114 * src[3 * i + 2];
        dst[i] = static_cast<std::uint8_t>(std::clamp(std::lround(y), 0L, 255L));
    }
    return out;
}

std::vector<double> gaussian_kernel(double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw InvalidArgument("gaussian_blur: sigma must be > 0, got " + std::to_string(sigma));
    }
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += k[i + radius];
    }
    for (auto& v : k) v /= sum;
    return k;
}

GrayImage gaussian_blur(const GrayImage& img, double sigma) {
    const auto kernel = gaussian_kernel(sigma);
    const int radius = static_cast<int>(kernel.size() / 2);
    const int h = img.height();
    const int w = img.width();

    std::vector<double> tmp(static_cast<std::size_t>(h) * w);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k) {
                const int cc = std::clamp(c + k, 0, w - 1);
                acc += kernel[k + radius] * img.at(r, cc);
            }
            tmp[static_cast<std::size_t>(r) * w + c] = acc;
        }
    }
    GrayImage out(h, w);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k) {
                const int rr = std::clamp(r + k, 0, h - 1);
                acc += kernel[k + radius] * tmp[static_cast<std::size_t>(rr) * w + c];
            }
            out.at(r, c) = static_cast<std::uint8_t>(std::clamp(std::lround(acc), 0L, 255L));
        }
    }
    return out;
}

Histogram histogram(const GrayImage& img) {
    Histogram hist{};
    for (auto v : img.data()) ++hist[v];
    return hist;
}

namespace {

double split_variance(std::uint64_t n0, std::uint64_t s0, std::uint64_t n, std::uint64_t s) {
    const std::uint64_t n1 = n - n0;
    if (n0 == 0 || n1 == 0) return 0.0;
    const double w0 = static_cast<double>(n0) / static_cast<double>(n);
    const double w1 = static_cast<double>(n1) / static_cast<double>(n);
    const double mu0 = static_cast<double>(s0) / static_cast<double>(n0);
    const double mu1 = static_cast<double>(s - s0) / static_cast<double>(n1);
    return w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
}

}  // namespace

double between_class_variance(const Histogram& hist, int t) {
    std::uint64_t n = 0, s = 0, n0 = 0, s0 = 0;
    for (int i = 0; i < 256; ++i) {
        n += hist[i];
        s += hist[i] * static_cast<std::uint64_t>(i);
        if (i <= t) {
            n0 += hist[i];
            s0 += hist[i] * static_cast<std::uint64_t>(i);
        }
    }
    return split_variance(n0, s0, n, s);
}

int otsu_threshold(const Histogram& hist) {
    std::uint64_t n = 0, s = 0;
    for (int i = 0; i < 256; ++i) {
        n += hist[i];
        s += hist[i] * static_cast<std::uint64_t>(i);
    }
    if (n == 0) throw InvalidArgument("otsu_threshold: empty histogram");

    int best_t = 0;
    double best = -1.0;
    std::uint64_t n0 = 0, s0 = 0;
    for (int t = 0; t < 256; ++t) {
        n0 += hist[t];
        s0 += hist[t] * static_cast<std::uint64_t>(t);
        const double v = split_variance(n0, s0, n, s);
        if (v > best) {
            best = v;
            best_t = t;
        }
    }
    return best_t;
}

namespace {

struct UnionFind {
    std::vector<std::int32_t> parent;

    std::int32_t make() {
        parent.push_back(static_cast<std::int32_t>(parent.size()));
        return parent.back();
    }
    std::int32_t find(std::int32_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    void unite(std::int32_t a, std::int32_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (a < b) std::swap(a, b);
        parent[a] = b;
    }
};

}  // namespace

LabelMap connected_components(const GrayImage& binary, int connectivity) {
    if (connectivity != 4 && connectivity != 8) {
        throw InvalidArgument("connected_components: connectivity must be 4 or 8");
    }
    const int h = binary.height();
    const int w = binary.width();
    std::vector<std::int32_t> provisional(static_cast<std::size_t>(h) * w, -1);
    UnionFind uf;

    auto prov = [&](int r, int c) -> std::int32_t {
        if (r < 0 || c < 0 || c >= w) return -1;
        return provisional[static_cast<std::size_t>(r) * w + c];
    };

    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (binary.at(r, c) == 0) continue;
            std::int32_t neighbours[4];
            int count = 0;
            neighbours[count++] = prov(r, c - 1);
            neighbours[count++] = prov(r - 1, c);
            if (connectivity == 8) {
                neighbours[count++] = prov(r - 1, c - 1);
                neighbours[count++] = prov(r - 1, c + 1);
            }
            std::int32_t label = -1;
            for (int i = 0; i < count; ++i) {
                if (neighbours[i] < 0) continue;
                if (label < 0) {
                    label = neighbours[i];
                } else {
                    uf.unite(label, neighbours[i]);
                }
            }
            if (label < 0) label = uf.make();
            provisional[static_cast<std::size_t>(r) * w + c] = label;
        }
    }

    std::vector<std::int32_t> final_label(uf.parent.size(), 0);
    std::vector<std::int32_t> out(provisional.size(), 0);
    std::int32_t next = 1;
    for (std::size_t i = 0; i < provisional.size(); ++i) {
        if (provisional[i] < 0) continue;
        const auto root = uf.find(provisional[i]);
        if (final_label[root] == 0) final_label[root] = next++;
        out[i] = final_label[root];
    }
    return LabelMap(h, w, std::move(out));
}

namespace {

// Felzenszwalb-Huttenlocher lower envelope of parabolas.
void squared_edt_1d(const std::vector<double>& f, std::vector<double>& d) {
    const int n = static_cast<int>(f.size());
    std::vector<int> v(n);
    std::vector<double> z(n + 1);
    auto intersect = [&](int q, int p) {
        return ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * q - 2.0 * p);
    };
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (int q = 1; q < n; ++q) {
        double s = intersect(q, v[k]);
        while (s <= z[k]) {
            --k;
            s = intersect(q, v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

}  // namespace

std::vector<double> distance_transform(const GrayImage& binary) {
    const int h = binary.height() + 2;
    const int w = binary.width() + 2;
    constexpr double kInf = 1e20;
    std::vector<double> grid(static_cast<std::size_t>(h) * w, 0.0);
    for (int r = 1; r < h - 1; ++r) {
        for (int c = 1; c < w - 1; ++c) {
            grid[static_cast<std::size_t>(r) * w + c] = binary.at(r - 1, c - 1) ? kInf : 0.0;
        }
    }
    std::vector<double> f, d;
    f.resize(h);
    d.resize(h);
    for (int c = 0; c < w; ++c) {
        for (int r = 0; r < h; ++r) f[r] = grid[static_cast<std::size_t>(r) * w + c];
        squared_edt_1d(f, d);
        for (int r = 0; r < h; ++r) grid[static_cast<std::size_t>(r) * w + c] = d[r];
    }
    f.resize(w);
    d.resize(w);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) f[c] = grid[static_cast<std::size_t>(r) * w + c];
        squared_edt_1d(f, d);
        for (int c = 0; c < w; ++c) grid[static_cast<std::size_t>(r) * w + c] = d[c];
    }
    std::vector<double> out(binary.pixel_count());
    for (int r = 0; r < binary.height(); ++r) {
        for (int c = 0; c < binary.width(); ++c) {
            out[static_cast<std::size_t>(r) * binary.width() + c] =
                std::sqrt(grid[static_cast<std::size_t>(r + 1) * w + c + 1]);
        }
    }
    return out;
}

std::vector<std::pair<std::int32_t, std::int32_t>> label_adjacency(const LabelMap& labels, int connectivity) {
    if (connectivity != 4 && connectivity != 8) throw InvalidArgument("label_adjacency: connectivity must be 4 or 8");
    std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
    const int h = labels.height(), w = labels.width();
    // forward half of the neighbourhood visits every pixel pair once
    constexpr int dr[4] = {0, 1, 1, 1};
    constexpr int dc[4] = {1, 0, -1, 1};
    const int steps = connectivity == 8 ? 4 : 2;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const auto a = labels.at(r, c);
            if (a == 0) continue;
            for (int k = 0; k < steps; ++k) {
                const int rr = r + dr[k], cc = c + dc[k];
                if (rr >= h || cc < 0 || cc >= w) continue;
                const auto b = labels.at(rr, cc);
                if (b == 0 || b == a) continue;
                pairs.emplace_back(std::min(a, b), std::max(a, b));
            }
        }
    }
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    return pairs;
}

}  // namespace histograph
