#pragma once

// Fixtures and independent reference implementations shared by the unit
// tests and the acceptance harness.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "histograph/features.hpp"
#include "histograph/filters.hpp"
#include "histograph/gnn.hpp"
#include "histograph/graph.hpp"
#include "histograph/image.hpp"
#include "histograph/random.hpp"
#include "histograph/stain.hpp"
#include "histograph/synth.hpp"
#include "histograph/train.hpp"

namespace support {

using namespace histograph;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;

inline Image random_image(int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    Image img(h, w);
    for (auto& v : img.data()) v = static_cast<std::uint8_t>(rng.below(256));
    return img;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("histograph_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// ---- filters ----

inline double brute_between_class_variance(const Histogram& h, int t) {
    double n0 = 0, n1 = 0, s0 = 0, s1 = 0;
    for (int i = 0; i < 256; ++i) {
        if (i <= t) {
            n0 += double(h[i]);
            s0 += double(h[i]) * i;
        } else {
            n1 += double(h[i]);
            s1 += double(h[i]) * i;
        }
    }
    const double n = n0 + n1;
    if (n0 == 0 || n1 == 0) return 0.0;
    const double m0 = s0 / n0, m1 = s1 / n1;
    return (n0 / n) * (n1 / n) * (m0 - m1) * (m0 - m1);
}

/// Exhaustive Otsu: argmax over every t, the first maximum wins.
inline int brute_otsu(const Histogram& h) {
    int best_t = 0;
    double best = -1.0;
    for (int t = 0; t < 256; ++t) {
        const double v = brute_between_class_variance(h, t);
        if (v > best) {
            best = v;
            best_t = t;
        }
    }
    return best_t;
}

/// BFS flood fill labelling; numbering follows raster order of seeds.
inline LabelMap flood_fill_components(const GrayImage& bin, int connectivity) {
    const int h = bin.height(), w = bin.width();
    LabelMap out(h, w);
    std::int32_t next = 0;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (!bin.at(r, c) || out.at(r, c)) continue;
            ++next;
            std::queue<std::pair<int, int>> q;
            q.push({r, c});
            out.at(r, c) = next;
            while (!q.empty()) {
                auto [y, x] = q.front();
                q.pop();
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (dy == 0 && dx == 0) continue;
                        if (connectivity == 4 && dy != 0 && dx != 0) continue;
                        const int ny = y + dy, nx = x + dx;
                        if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
                        if (!bin.at(ny, nx) || out.at(ny, nx)) continue;
                        out.at(ny, nx) = next;
                        q.push({ny, nx});
                    }
                }
            }
        }
    }
    return out;
}

/// True when every label of `l` is a single 4-connected component.
inline bool labels_connected(const LabelMap& l) {
    std::map<std::int32_t, int> components;
    std::vector<char> seen(l.pixel_count(), 0);
    const int h = l.height(), w = l.width();
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const auto id = l.at(r, c);
            if (id == 0 || seen[std::size_t(r) * w + c]) continue;
            ++components[id];
            std::queue<std::pair<int, int>> q;
            q.push({r, c});
            seen[std::size_t(r) * w + c] = 1;
            while (!q.empty()) {
                auto [y, x] = q.front();
                q.pop();
                const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
                for (int k = 0; k < 4; ++k) {
                    const int ny = y + dy[k], nx = x + dx[k];
                    if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
                    auto& s = seen[std::size_t(ny) * w + nx];
                    if (s || l.at(ny, nx) != id) continue;
                    s = 1;
                    q.push({ny, nx});
                }
            }
        }
    }
    return std::all_of(components.begin(), components.end(), [](const auto& kv) { return kv.second == 1; });
}

/// Pairs of distinct positive labels that touch under 8-adjacency, by a full
/// scan of every pixel's neighbourhood.
inline std::set<std::pair<int, int>> brute_touching(const LabelMap& l) {
    std::set<std::pair<int, int>> out;
    for (int r = 0; r < l.height(); ++r) {
        for (int c = 0; c < l.width(); ++c) {
            const int a = l.at(r, c);
            if (a == 0) continue;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const int y = r + dy, x = c + dx;
                    if (y < 0 || x < 0 || y >= l.height() || x >= l.width()) continue;
                    const int b = l.at(y, x);
                    if (b != 0 && b != a) out.insert({std::min(a, b), std::max(a, b)});
                }
            }
        }
    }
    return out;
}

/// Voronoi partition of an h x w raster around `seeds` random sites.
inline LabelMap voronoi(int h, int w, int seeds, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::pair<double, double>> sites;
    for (int i = 0; i < seeds; ++i) sites.push_back({rng.uniform(0, h), rng.uniform(0, w)});
    LabelMap l(h, w);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            int best = 0;
            double bd = 1e300;
            for (int i = 0; i < seeds; ++i) {
                const double d = std::hypot(r - sites[i].first, c - sites[i].second);
                if (d < bd) {
                    bd = d;
                    best = i;
                }
            }
            l.at(r, c) = best + 1;
        }
    }
    return relabel_sequential(l);
}

// ---- GLCM ----

/// GLCM of one entity by enumerating every ordered pixel pair at `offset`.
inline MatrixXd brute_glcm(const GrayImage& gray, const LabelMap& labels, std::int32_t id, std::pair<int, int> off,
                           int levels, bool symmetric, bool normalize) {
    MatrixXd p = MatrixXd::Zero(levels, levels);
    for (int r = 0; r < gray.height(); ++r) {
        for (int c = 0; c < gray.width(); ++c) {
            const int r2 = r + off.first, c2 = c + off.second;
            if (r2 < 0 || c2 < 0 || r2 >= gray.height() || c2 >= gray.width()) continue;
            if (labels.at(r, c) != id || labels.at(r2, c2) != id) continue;
            const int i = gray.at(r, c) * levels / 256, j = gray.at(r2, c2) * levels / 256;
            p(i, j) += 1;
            if (symmetric) p(j, i) += 1;
        }
    }
    if (normalize && p.sum() > 0) p /= p.sum();
    return p;
}

struct BruteGlcmStats {
    double contrast = 0, dissimilarity = 0, homogeneity = 0, asm_ = 0, energy = 0, dispersion = 0;
};

inline BruteGlcmStats brute_glcm_stats(const MatrixXd& p) {
    BruteGlcmStats s;
    double mu = 0;
    for (int i = 0; i < p.rows(); ++i)
        for (int j = 0; j < p.cols(); ++j) mu += i * p(i, j);
    for (int i = 0; i < p.rows(); ++i) {
        for (int j = 0; j < p.cols(); ++j) {
            const double d = i - j;
            s.contrast += p(i, j) * d * d;
            s.dissimilarity += p(i, j) * std::abs(d);
            s.homogeneity += p(i, j) / (1.0 + d * d);
            s.asm_ += p(i, j) * p(i, j);
            s.dispersion += p(i, j) * (i - mu) * (i - mu);
        }
    }
    s.energy = std::sqrt(s.asm_);
    return s;
}

// ---- graphs ----

inline std::vector<Point> random_points(int n, double extent, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Point> pts(static_cast<std::size_t>(n));
    for (auto& p : pts) p = {rng.uniform(0, extent), rng.uniform(0, extent)};
    return pts;
}

inline EntityTable table_from_points(const std::vector<Point>& pts) {
    EntityTable t;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        Entity e;
        e.id = static_cast<std::int32_t>(i + 1);
        e.centroid = pts[i];
        e.area = 1;
        e.bbox = {int(pts[i].row), int(pts[i].col), int(pts[i].row), int(pts[i].col)};
        t.push_back(e);
    }
    return t;
}

inline features::FeatureMatrix random_features(int n, int d, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Rng rng(seed);
    features::FeatureMatrix fm;
    for (int i = 0; i < n; ++i) fm.ids.push_back(i + 1);
    for (int k = 0; k < d; ++k) fm.names.push_back("f" + std::to_string(k));
    fm.values.resize(n, d);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < d; ++k) fm.values(i, k) = rng.uniform(lo, hi);
    return fm;
}

/// O(N^2) union kNN: node i links to the k closest others (ties to the lower
/// index) lying within `threshold`.
inline std::set<std::pair<int, int>> brute_knn_edges(const std::vector<Point>& pts, int k,
                                                     std::optional<double> threshold) {
    std::set<std::pair<int, int>> out;
    const int n = static_cast<int>(pts.size());
    for (int i = 0; i < n; ++i) {
        std::vector<std::pair<double, int>> d;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            const double dr = pts[i].row - pts[j].row, dc = pts[i].col - pts[j].col;
            d.push_back({dr * dr + dc * dc, j});
        }
        std::sort(d.begin(), d.end());
        for (int m = 0; m < std::min<int>(k, int(d.size())); ++m) {
            if (threshold && std::sqrt(d[m].first) > *threshold) continue;
            out.insert({std::min(i, d[m].second), std::max(i, d[m].second)});
        }
    }
    return out;
}

/// Erdos-Renyi graph with random features and centroids.
inline graph::EntityGraph random_graph(int n, double p, int dim, std::uint64_t seed) {
    Rng rng(seed);
    graph::EntityGraph g;
    g.num_nodes = n;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (rng.uniform() < p) g.edges.push_back({i, j});
    g.node_features = random_features(n, dim, seed ^ 0x9e3779b97f4a7c15ULL);
    g.centroids = random_points(n, 100.0, seed + 7);
    return g;
}

/// Graph with node perm[i] taking the role of node i.
inline graph::EntityGraph permute_graph(const graph::EntityGraph& g, const std::vector<int>& perm) {
    graph::EntityGraph out;
    out.num_nodes = g.num_nodes;
    out.node_features = g.node_features;
    out.centroids = g.centroids;
    for (int i = 0; i < g.num_nodes; ++i) {
        out.node_features.values.row(perm[i]) = g.node_features.values.row(i);
        out.node_features.ids[perm[i]] = g.node_features.ids[i];
        out.centroids[perm[i]] = g.centroids[i];
    }
    for (auto [u, v] : g.edges) {
        const int a = perm[u], b = perm[v];
        out.edges.push_back({std::min(a, b), std::max(a, b)});
    }
    std::sort(out.edges.begin(), out.edges.end());
    return out;
}

inline std::vector<int> random_permutation(int n, std::uint64_t seed) {
    std::vector<int> p(static_cast<std::size_t>(n));
    std::iota(p.begin(), p.end(), 0);
    Rng rng(seed);
    rng.shuffle(p);
    return p;
}

inline MatrixXd dense_adjacency(const graph::EntityGraph& g) {
    MatrixXd a = MatrixXd::Zero(g.num_nodes, g.num_nodes);
    for (auto [u, v] : g.edges) a(u, v) = a(v, u) = 1.0;
    return a;
}

inline MatrixXd relu(const MatrixXd& m) { return m.cwiseMax(0.0); }

/// Layer-by-layer forward written from the definitions: GIN as a dense
/// matrix product, PNA as a per-node loop over neighbour lists.
inline std::vector<MatrixXd> oracle_node_levels(const gnn::GnnModel& m, const graph::EntityGraph& g) {
    const MatrixXd a = dense_adjacency(g);
    const int n = g.num_nodes;
    std::vector<MatrixXd> levels{g.node_features.values};
    for (const auto& layer : m.params.layers) {
        const MatrixXd& h = levels.back();
        MatrixXd z;
        if (m.config.layer == gnn::LayerType::Gin) {
            z = (a + (1.0 + m.config.gin_eps) * MatrixXd::Identity(n, n)) * h;
        } else {
            const int d = static_cast<int>(h.cols());
            const double delta = m.config.pna_delta;
            z = MatrixXd::Zero(n, 13 * d);
            z.leftCols(d) = h;
            for (int v = 0; v < n; ++v) {
                std::vector<int> nb;
                for (int u = 0; u < n; ++u)
                    if (a(v, u) != 0.0) nb.push_back(u);
                if (nb.empty()) continue;
                const double deg = double(nb.size());
                const double scal[3] = {1.0, std::log(deg + 1) / delta, delta / std::log(deg + 1)};
                for (int k = 0; k < d; ++k) {
                    double s = 0, lo = 1e300, hi = -1e300, sq = 0;
                    for (int u : nb) {
                        s += h(u, k);
                        lo = std::min(lo, h(u, k));
                        hi = std::max(hi, h(u, k));
                    }
                    const double mean = s / deg;
                    for (int u : nb) sq += (h(u, k) - mean) * (h(u, k) - mean);
                    const double agg[4] = {mean, lo, hi, std::sqrt(sq / deg)};
                    for (int si = 0; si < 3; ++si)
                        for (int ai = 0; ai < 4; ++ai) z(v, d * (1 + 4 * si + ai) + k) = scal[si] * agg[ai];
                }
            }
        }
        for (const auto& dense : layer) {
            z = relu((z * dense.weight).rowwise() + RowVectorXd(dense.bias));
        }
        levels.push_back(z);
    }
    return levels;
}

inline RowVectorXd oracle_logits(const gnn::GnnModel& m, const graph::EntityGraph& g) {
    const MatrixXd h = oracle_node_levels(m, g).back();
    RowVectorXd r = RowVectorXd::Zero(h.cols());
    for (int i = 0; i < h.rows(); ++i) r += h.row(i);
    if (m.config.readout == gnn::Readout::Mean && h.rows() > 0) r /= double(h.rows());
    for (std::size_t j = 0; j < m.params.head.size(); ++j) {
        r = r * m.params.head[j].weight + RowVectorXd(m.params.head[j].bias);
        if (j + 1 < m.params.head.size()) r = r.cwiseMax(0.0);
    }
    return r;
}

inline gnn::GnnConfig small_config(gnn::LayerType t, int input_dim) {
    gnn::GnnConfig c;
    c.layer = t;
    c.input_dim = input_dim;
    c.num_layers = 2;
    c.hidden = 5;
    c.mlp_depth = 2;
    c.head_hidden = 4;
    c.head_depth = 2;
    c.num_classes = 3;
    c.pna_delta = t == gnn::LayerType::Pna ? 1.3 : 0.0;
    return c;
}

/// Model with random (not Glorot) biases so ReLU patterns are generic.
inline gnn::GnnModel random_model(const gnn::GnnConfig& c, std::uint64_t seed) {
    auto m = gnn::init_model(c, seed);
    Rng rng(seed + 101);
    for (auto& [name, t] : m.params.tensors()) {
        if (name.find("bias") != std::string::npos) {
            for (Eigen::Index i = 0; i < t->size(); ++i) t->data()[i] = rng.uniform(-0.3, 0.3);
        }
    }
    return m;
}

/// Distance of a forward pass from the nearest point where it is not
/// differentiable: ReLU inputs at 0, PNA min/max ties, zero PNA deviation.
inline double kink_margin(const gnn::GnnModel& m, const graph::EntityGraph& g) {
    const auto cache = gnn::forward(m, g);
    double margin = std::numeric_limits<double>::infinity();
    for (const auto& lc : cache.layers) {
        for (const auto& z : lc.pre) margin = std::min(margin, z.cwiseAbs().minCoeff());
        if (m.config.layer != gnn::LayerType::Pna) continue;
        for (std::size_t v = 0; v < cache.adj.size(); ++v) {
            const auto& nb = cache.adj[v];
            if (nb.size() < 2) continue;
            for (Eigen::Index k = 0; k < lc.input.cols(); ++k) {
                std::vector<double> vals;
                for (int u : nb) vals.push_back(lc.input(u, k));
                std::sort(vals.begin(), vals.end());
                margin = std::min({margin, vals[1] - vals[0], vals.back() - vals[vals.size() - 2],
                                   lc.stddev(Eigen::Index(v), k)});
            }
        }
    }
    for (std::size_t j = 0; j + 1 < cache.head_pre.size(); ++j) margin = std::min(margin, cache.head_pre[j].cwiseAbs().minCoeff());
    return margin;
}

struct GradFixture {
    graph::EntityGraph graph;
    gnn::GnnModel model;
};

/// Graph and model for finite-difference checks: the first draw from `seed`
/// whose forward pass stays at least 1e-3 away from every kink, so a central
/// difference with step 1e-5 never straddles one. PNA biases are shifted up
/// so few ReLU outputs are exactly 0, since ties among zeros are kinks of min
/// and max.
inline GradFixture grad_fixture(gnn::LayerType type, std::uint64_t seed) {
    for (std::uint64_t attempt = 0;; ++attempt) {
        const std::uint64_t s = seed * 1000 + attempt;
        GradFixture f{random_graph(7, 0.35, 3, s), random_model(small_config(type, 3), s)};
        if (type == gnn::LayerType::Pna) {
            for (auto& layer : f.model.params.layers)
                for (auto& dense : layer) dense.bias.array() += 1.0;
        }
        if (kink_margin(f.model, f.graph) > 1e-3) return f;
        if (attempt > 10000) throw Error("grad_fixture: no smooth draw");
    }
}

/// Relative error with a floor on the scale, so two gradients that are both
/// below the floor compare by absolute difference.
inline double rel_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

/// Model running layers `from`.. of `m`, taking nodes(from) as its input.
inline gnn::GnnModel suffix_model(const gnn::GnnModel& m, int from) {
    gnn::GnnModel s = m;
    s.config.num_layers -= from;
    if (from > 0) s.config.input_dim = m.config.hidden;
    s.params.layers.erase(s.params.layers.begin(), s.params.layers.begin() + from);
    return s;
}

struct GradCheck {
    double params = 0.0;  // max relative error over every parameter
    double nodes = 0.0;   // max relative error over every node activation, all levels
};

/// Analytic gradients of cross-entropy vs central differences with step h.
inline GradCheck gradient_check(const gnn::GnnModel& model, const graph::EntityGraph& g, int label, double h = 1e-5) {
    const auto adj = g.adjacency();
    const auto cache = gnn::forward(model, g.node_features.values, adj);
    const auto grads = gnn::backward(model, cache, gnn::cross_entropy_grad(cache.logits, label));
    GradCheck out;

    gnn::GnnModel probe = model;
    auto tensors = probe.params.tensors();
    const auto analytic = grads.params.tensors();
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        MatrixXd& w = *tensors[t].second;
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            const double keep = w.data()[i];
            w.data()[i] = keep + h;
            const double up = gnn::cross_entropy(gnn::forward(probe, g.node_features.values, adj).logits, label);
            w.data()[i] = keep - h;
            const double down = gnn::cross_entropy(gnn::forward(probe, g.node_features.values, adj).logits, label);
            w.data()[i] = keep;
            out.params = std::max(out.params, rel_error(analytic[t].second->data()[i], (up - down) / (2 * h)));
        }
    }

    for (int level = 0; level < model.config.num_layers; ++level) {
        const auto sub = suffix_model(model, level);
        MatrixXd x = cache.nodes(level);
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double keep = x.data()[i];
            x.data()[i] = keep + h;
            const double up = gnn::cross_entropy(gnn::forward(sub, x, adj).logits, label);
            x.data()[i] = keep - h;
            const double down = gnn::cross_entropy(gnn::forward(sub, x, adj).logits, label);
            x.data()[i] = keep;
            out.nodes = std::max(out.nodes, rel_error(grads.nodes[std::size_t(level)].data()[i], (up - down) / (2 * h)));
        }
    }
    return out;
}

// ---- GNN datasets ----

inline graph::EntityGraph ring_graph(int n) {
    graph::EntityGraph g;
    g.num_nodes = n;
    for (int i = 0; i < n; ++i) {
        const int j = (i + 1) % n;
        g.edges.push_back({std::min(i, j), std::max(i, j)});
    }
    std::sort(g.edges.begin(), g.edges.end());
    g.node_features.names = {"one"};
    g.node_features.values = MatrixXd::Ones(n, 1);
    for (int i = 0; i < n; ++i) {
        g.node_features.ids.push_back(i + 1);
        g.centroids.push_back({double(i), 0.0});
    }
    return g;
}

/// `cliques` disjoint 6-cliques.
inline graph::EntityGraph clique_graph(int cliques) {
    graph::EntityGraph g;
    g.num_nodes = 6 * cliques;
    for (int q = 0; q < cliques; ++q)
        for (int i = 0; i < 6; ++i)
            for (int j = i + 1; j < 6; ++j) g.edges.push_back({6 * q + i, 6 * q + j});
    g.node_features.names = {"one"};
    g.node_features.values = MatrixXd::Ones(g.num_nodes, 1);
    for (int i = 0; i < g.num_nodes; ++i) {
        g.node_features.ids.push_back(i + 1);
        g.centroids.push_back({double(i), 0.0});
    }
    return g;
}

/// 30 rings (degree 2, class 0) and 30 unions of 6-cliques (degree 5, class 1).
inline std::vector<std::pair<graph::EntityGraph, int>> ring_clique_dataset() {
    std::vector<std::pair<graph::EntityGraph, int>> out;
    for (int i = 0; i < 30; ++i) {
        out.push_back({ring_graph(6 + i % 10), 0});
        out.push_back({clique_graph(1 + i % 3), 1});
    }
    return out;
}

struct PlantedGraph {
    graph::EntityGraph graph;
    std::vector<int> marked;
    int label = 0;
};

/// Random geometric-style graph of `n` nodes with 2 features of small noise.
/// Class 1 graphs carry 3 marked nodes whose feature 0 is 1.
inline PlantedGraph planted_graph(int n, int label, std::uint64_t seed) {
    Rng rng(seed);
    PlantedGraph pg;
    pg.label = label;
    auto& g = pg.graph;
    g.num_nodes = n;
    g.centroids = random_points(n, 60.0, seed + 1);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (std::hypot(g.centroids[i].row - g.centroids[j].row, g.centroids[i].col - g.centroids[j].col) < 25.0)
                g.edges.push_back({i, j});
        }
    }
    g.node_features.names = {"signal", "noise"};
    g.node_features.values.resize(n, 2);
    for (int i = 0; i < n; ++i) {
        g.node_features.ids.push_back(i + 1);
        g.node_features.values(i, 0) = rng.uniform(0.0, 0.1);
        g.node_features.values(i, 1) = rng.uniform(0.0, 0.1);
    }
    if (label == 1) {
        auto perm = random_permutation(n, seed + 2);
        pg.marked.assign(perm.begin(), perm.begin() + 3);
        std::sort(pg.marked.begin(), pg.marked.end());
        for (int v : pg.marked) g.node_features.values(v, 0) = 1.0;
    }
    return pg;
}

/// 20 + 20 planted graphs of 12 nodes drawn from `seed`.
inline std::vector<PlantedGraph> planted_dataset(std::uint64_t seed, int per_class = 20) {
    std::vector<PlantedGraph> out;
    for (int i = 0; i < per_class; ++i) {
        out.push_back(planted_graph(12, 0, seed * 1000 + 2 * std::uint64_t(i)));
        out.push_back(planted_graph(12, 1, seed * 1000 + 2 * std::uint64_t(i) + 1));
    }
    return out;
}

/// Small GIN trained on the planted dataset of `seed`.
inline gnn::GnnModel train_planted_model(std::uint64_t seed) {
    const auto data = planted_dataset(seed);
    std::vector<gnn::Sample> samples;
    for (const auto& pg : data) samples.push_back({&pg.graph, pg.label});
    gnn::GnnConfig cfg;
    cfg.input_dim = 2;
    cfg.num_layers = 2;
    cfg.hidden = 16;
    cfg.head_hidden = 16;
    auto model = gnn::init_model(cfg, seed);
    gnn::TrainConfig tc;
    tc.epochs = 150;
    tc.seed = seed;
    gnn::train(model, samples, tc);
    return model;
}

/// Mean score of the marked nodes minus the mean score of the rest.
inline double planted_margin(const std::vector<double>& scores, const std::vector<int>& marked) {
    double in = 0, out = 0;
    int n_in = 0, n_out = 0;
    for (int v = 0; v < int(scores.size()); ++v) {
        if (std::find(marked.begin(), marked.end(), v) != marked.end()) {
            in += scores[std::size_t(v)];
            ++n_in;
        } else {
            out += scores[std::size_t(v)];
            ++n_out;
        }
    }
    return in / n_in - out / n_out;
}

// ---- stain fixtures ----

inline Eigen::Vector3d jitter_direction(const Eigen::Vector3d& v, double scale, Rng& rng) {
    Eigen::Vector3d out;
    for (int i = 0; i < 3; ++i) out(i) = std::max(0.02, v(i) + scale * rng.normal());
    return out.normalized();
}

struct StainFixture {
    stain::StainMatrix truth;
    Image image;
    stain::ConcentrationMap conc;
};

/// Image synthesized from seeded stain vectors near the usual H&E directions.
/// Pixels are background, pure hematoxylin, pure eosin or a mixture.
inline StainFixture stain_fixture(std::uint64_t seed, int side = 96) {
    Rng rng(seed);
    const auto ref = stain::default_profile().stains;
    StainFixture f;
    f.truth = stain::StainMatrix::from_columns(jitter_direction(ref.hematoxylin, 0.05, rng),
                                               jitter_direction(ref.eosin, 0.05, rng));
    f.conc.height = f.conc.width = side;
    f.conc.values.assign(std::size_t(side) * side * 2, 0.0);
    for (std::size_t i = 0; i < std::size_t(side) * side; ++i) {
        const double u = rng.uniform();
        double ch = 0, ce = 0;
        if (u < 0.1) {
        } else if (u < 0.4) {
            ch = rng.uniform(0.3, 1.5);
        } else if (u < 0.7) {
            ce = rng.uniform(0.3, 1.2);
        } else {
            ch = rng.uniform(0.1, 1.0);
            ce = rng.uniform(0.1, 1.0);
        }
        f.conc.values[2 * i] = ch;
        f.conc.values[2 * i + 1] = ce;
    }
    f.image = synth::compose(f.truth, f.conc);
    return f;
}

inline double mean_abs_diff(const Image& a, const Image& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.data().size(); ++i) s += std::abs(int(a.data()[i]) - int(b.data()[i]));
    return s / double(a.data().size());
}

// ---- nuclei fixtures ----

/// 10 disjoint radius-8 disks on a 3 x 4 grid (two cells left empty), with
/// seeded sub-pixel jitter.
inline std::vector<synth::Disk> ten_disks(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<synth::Disk> disks;
    for (int i = 0; i < 10; ++i) {
        const int gr = i / 4, gc = i % 4;
        disks.push_back({24.0 + 40.0 * gr + rng.uniform(-3, 3), 24.0 + 40.0 * gc + rng.uniform(-3, 3), 8.0});
    }
    return disks;
}

struct Match {
    int true_positives = 0;
    double max_centroid_error = 0.0;
};

/// Greedy one-to-one matching of detections to disks within `radius`.
inline Match match_centroids(const EntityTable& found, const std::vector<synth::Disk>& disks, double radius) {
    Match m;
    std::vector<char> used(found.size(), 0);
    for (const auto& d : disks) {
        int best = -1;
        double bd = radius;
        for (std::size_t i = 0; i < found.size(); ++i) {
            if (used[i]) continue;
            const double e = std::hypot(found[i].centroid.row - d.row, found[i].centroid.col - d.col);
            if (e <= bd) {
                bd = e;
                best = int(i);
            }
        }
        if (best >= 0) {
            used[std::size_t(best)] = 1;
            ++m.true_positives;
            m.max_centroid_error = std::max(m.max_centroid_error, bd);
        }
    }
    return m;
}

// ---- superpixel fixtures ----

/// Left half purple, right half pink.
inline Image two_half_image(int h = 64, int w = 64) {
    Image img(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) img.set(r, c, c < w / 2 ? std::array<std::uint8_t, 3>{90, 60, 150}
                                                            : std::array<std::uint8_t, 3>{235, 160, 190});
    return img;
}

/// True when every pixel is labelled and labels are exactly 1..L.
inline bool is_partition(const LabelMap& l) {
    std::set<std::int32_t> seen;
    for (auto v : l.labels()) {
        if (v <= 0) return false;
        seen.insert(v);
    }
    return !seen.empty() && *seen.rbegin() == static_cast<std::int32_t>(seen.size());
}

/// True when each fine label maps into exactly one coarse label.
inline bool is_coarsening(const LabelMap& fine, const LabelMap& coarse) {
    std::map<std::int32_t, std::int32_t> to;
    for (std::size_t i = 0; i < fine.pixel_count(); ++i) {
        auto [it, inserted] = to.insert({fine.labels()[i], coarse.labels()[i]});
        if (!inserted && it->second != coarse.labels()[i]) return false;
    }
    return true;
}

}  // namespace support
