#include "histograph/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

#include <nlohmann/json.hpp>

#include "histograph/error.hpp"
#include "histograph/filters.hpp"
#include "histograph/image_io.hpp"

namespace histograph::graph {

using json = nlohmann::json;

std::vector<std::vector<int>> EntityGraph::adjacency() const {
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(num_nodes));
    for (const auto& [u, v] : edges) {
        adj[u].push_back(v);
        adj[v].push_back(u);
    }
    for (auto& a : adj) std::sort(a.begin(), a.end());
    return adj;
}

void EntityGraph::validate() const {
    if (num_nodes < 0) throw InvalidArgument("graph: negative node count");
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const auto [u, v] = edges[i];
        if (u < 0 || u >= v || v >= num_nodes) {
            throw InvalidArgument("graph: edge (" + std::to_string(u) + ", " + std::to_string(v) + ") is invalid");
        }
        if (i > 0 && !(edges[i - 1] < edges[i])) throw InvalidArgument("graph: edges not sorted or duplicated");
    }
    if (node_features.rows() != num_nodes) throw InvalidArgument("graph: feature rows differ from node count");
    if (static_cast<int>(centroids.size()) != num_nodes) throw InvalidArgument("graph: centroid count differs from node count");
    node_features.validate();
}

void KnnParams::validate() const {
    if (k < 1) throw InvalidArgument("knn: k must be >= 1");
    if (threshold && !(*threshold > 0.0)) throw InvalidArgument("knn: threshold must be > 0");
}

namespace {

double sq_dist(const Point& a, const Point& b) {
    const double dr = a.row - b.row, dc = a.col - b.col;
    return dr * dr + dc * dc;
}

constexpr std::size_t kBruteForceLimit = 256;

std::vector<int> select_nearest(std::vector<std::pair<double, int>>& cand, int k, std::optional<double> threshold) {
    const auto kk = std::min<std::size_t>(static_cast<std::size_t>(k), cand.size());
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(kk), cand.end());
    std::vector<int> out;
    for (std::size_t i = 0; i < kk; ++i) {
        if (threshold && cand[i].first > *threshold * *threshold) break;
        out.push_back(cand[i].second);
    }
    return out;
}

}  // namespace

std::vector<std::vector<int>> knn_candidates(const std::vector<Point>& pts, const KnnParams& params) {
    params.validate();
    const std::size_t n = pts.size();
    std::vector<std::vector<int>> out(n);
    if (n < 2) return out;
    std::vector<std::pair<double, int>> cand;

    if (n < kBruteForceLimit) {
        for (std::size_t i = 0; i < n; ++i) {
            cand.clear();
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i) cand.emplace_back(sq_dist(pts[i], pts[j]), static_cast<int>(j));
            }
            out[i] = select_nearest(cand, params.k, params.threshold);
        }
        return out;
    }

    // Uniform grid sized for roughly k points per cell.
    double rmin = pts[0].row, rmax = rmin, cmin = pts[0].col, cmax = cmin;
    for (const auto& p : pts) {
        rmin = std::min(rmin, p.row);
        rmax = std::max(rmax, p.row);
        cmin = std::min(cmin, p.col);
        cmax = std::max(cmax, p.col);
    }
    const double extent = std::max({rmax - rmin, cmax - cmin, 1.0});
    const double cell = std::max(1e-9, extent * std::sqrt(double(params.k) / double(n)));
    const int gh = static_cast<int>((rmax - rmin) / cell) + 1;
    const int gw = static_cast<int>((cmax - cmin) / cell) + 1;
    std::vector<std::vector<int>> buckets(static_cast<std::size_t>(gh) * gw);
    const auto cell_of = [&](const Point& p) {
        return std::pair{static_cast<int>((p.row - rmin) / cell), static_cast<int>((p.col - cmin) / cell)};
    };
    for (std::size_t i = 0; i < n; ++i) {
        const auto [gr, gc] = cell_of(pts[i]);
        buckets[static_cast<std::size_t>(gr) * gw + gc].push_back(static_cast<int>(i));
    }

    const int max_ring = std::max(gh, gw);
    for (std::size_t i = 0; i < n; ++i) {
        cand.clear();
        const auto [gr, gc] = cell_of(pts[i]);
        for (int ring = 0; ring <= max_ring; ++ring) {
            for (int r = gr - ring; r <= gr + ring; ++r) {
                if (r < 0 || r >= gh) continue;
                const bool edge_row = (r == gr - ring || r == gr + ring);
                for (int c = gc - ring; c <= gc + ring; c += (edge_row || ring == 0) ? 1 : 2 * ring) {
                    if (c < 0 || c >= gw) continue;
                    for (int j : buckets[static_cast<std::size_t>(r) * gw + c]) {
                        if (static_cast<std::size_t>(j) != i) cand.emplace_back(sq_dist(pts[i], pts[j]), j);
                    }
                }
            }
            // Everything outside the scanned rings is at least ring*cell away.
            const double reach = ring * cell;
            if (params.threshold && reach > *params.threshold) break;
            if (cand.size() >= static_cast<std::size_t>(params.k)) {
                std::nth_element(cand.begin(), cand.begin() + params.k - 1, cand.end());
                if (std::sqrt(cand[static_cast<std::size_t>(params.k) - 1].first) < reach) break;
            }
        }
        out[i] = select_nearest(cand, params.k, params.threshold);
    }
    return out;
}

namespace {

EntityGraph make_graph(const EntityTable& table, const features::FeatureMatrix& feats, std::vector<Edge> edges) {
    if (feats.rows() != static_cast<Eigen::Index>(table.size())) {
        throw InvalidArgument("graph: " + std::to_string(feats.rows()) + " feature rows for " +
                              std::to_string(table.size()) + " entities");
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    EntityGraph g;
    g.num_nodes = static_cast<int>(table.size());
    g.edges = std::move(edges);
    g.node_features = feats;
    for (const auto& e : table) g.centroids.push_back(e.centroid);
    g.validate();
    return g;
}

}  // namespace

EntityGraph build_knn_graph(const EntityTable& table, const features::FeatureMatrix& feats, const KnnParams& params) {
    std::vector<Point> pts;
    for (const auto& e : table) pts.push_back(e.centroid);
    const auto cand = knn_candidates(pts, params);
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < cand.size(); ++i) {
        for (int j : cand[i]) edges.emplace_back(std::min<int>(static_cast<int>(i), j), std::max<int>(static_cast<int>(i), j));
    }
    return make_graph(table, feats, std::move(edges));
}

EntityGraph build_rag(const LabelMap& labels, const features::FeatureMatrix& feats, const EntityTable& table) {
    std::map<std::int32_t, int> index;
    for (std::size_t i = 0; i < table.size(); ++i) index[table[i].id] = static_cast<int>(i);
    std::vector<Edge> edges;
    for (const auto& [a, b] : label_adjacency(labels)) {
        const auto ia = index.find(a), ib = index.find(b);
        if (ia == index.end() || ib == index.end()) {
            throw InvalidArgument("rag: label map region missing from the entity table");
        }
        edges.emplace_back(std::min(ia->second, ib->second), std::max(ia->second, ib->second));
    }
    return make_graph(table, feats, std::move(edges));
}

std::vector<int> assign_to_regions(const EntityTable& cells, const LabelMap& tissue_labels,
                                   const EntityTable& tissue_table) {
    std::map<std::int32_t, int> index;
    for (std::size_t i = 0; i < tissue_table.size(); ++i) index[tissue_table[i].id] = static_cast<int>(i);
    std::vector<int> out;
    for (const auto& c : cells) {
        const int r = std::clamp(static_cast<int>(std::lround(c.centroid.row)), 0, tissue_labels.height() - 1);
        const int col = std::clamp(static_cast<int>(std::lround(c.centroid.col)), 0, tissue_labels.width() - 1);
        const auto it = index.find(tissue_labels.at(r, col));
        out.push_back(it == index.end() ? -1 : it->second);
    }
    return out;
}

std::string graph_to_json(const EntityGraph& g) {
    g.validate();
    json j;
    j["num_nodes"] = g.num_nodes;
    j["edges"] = json::array();
    for (const auto& [u, v] : g.edges) j["edges"].push_back({u, v});
    j["node_features"] = json::array();
    for (Eigen::Index r = 0; r < g.node_features.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < g.node_features.cols(); ++c) row.push_back(g.node_features.values(r, c));
        j["node_features"].push_back(std::move(row));
    }
    j["centroids"] = json::array();
    for (const auto& p : g.centroids) j["centroids"].push_back({p.row, p.col});
    j["feature_names"] = g.node_features.names;
    j["node_ids"] = g.node_features.ids;
    return j.dump();
}

namespace {

const json& require(const json& j, const char* key) {
    if (!j.contains(key)) throw SchemaError(key, "missing");
    return j[key];
}

}  // namespace

EntityGraph graph_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError("graph", std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw SchemaError("graph", "expected an object");
    EntityGraph g;
    try {
        const auto& n = require(j, "num_nodes");
        if (!n.is_number_integer() || n.get<long long>() < 0) throw SchemaError("num_nodes", "expected a count");
        g.num_nodes = n.get<int>();

        const auto& edges = require(j, "edges");
        if (!edges.is_array()) throw SchemaError("edges", "expected an array of pairs");
        for (const auto& e : edges) {
            if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer()) {
                throw SchemaError("edges", "expected [u, v] integer pairs");
            }
            g.edges.emplace_back(e[0].get<int>(), e[1].get<int>());
        }

        const auto& names = require(j, "feature_names");
        if (!names.is_array()) throw SchemaError("feature_names", "expected an array of strings");
        for (const auto& s : names) {
            if (!s.is_string()) throw SchemaError("feature_names", "expected strings");
            g.node_features.names.push_back(s.get<std::string>());
        }

        const auto& feats = require(j, "node_features");
        if (!feats.is_array() || static_cast<int>(feats.size()) != g.num_nodes) {
            throw SchemaError("node_features", "expected num_nodes rows");
        }
        const auto d = static_cast<Eigen::Index>(g.node_features.names.size());
        g.node_features.values.resize(g.num_nodes, d);
        for (int r = 0; r < g.num_nodes; ++r) {
            const auto& row = feats[static_cast<std::size_t>(r)];
            if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != d) {
                throw SchemaError("node_features", "row " + std::to_string(r) + " has the wrong length");
            }
            for (Eigen::Index c = 0; c < d; ++c) {
                if (!row[static_cast<std::size_t>(c)].is_number()) throw SchemaError("node_features", "non-numeric value");
                g.node_features.values(r, c) = row[static_cast<std::size_t>(c)].get<double>();
            }
        }

        const auto& cents = require(j, "centroids");
        if (!cents.is_array() || static_cast<int>(cents.size()) != g.num_nodes) {
            throw SchemaError("centroids", "expected num_nodes [row, col] pairs");
        }
        for (const auto& p : cents) {
            if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
                throw SchemaError("centroids", "expected [row, col] pairs");
            }
            g.centroids.push_back({p[0].get<double>(), p[1].get<double>()});
        }

        if (j.contains("node_ids")) {
            const auto& ids = j["node_ids"];
            if (!ids.is_array() || static_cast<int>(ids.size()) != g.num_nodes) {
                throw SchemaError("node_ids", "expected num_nodes integers");
            }
            for (const auto& id : ids) {
                if (!id.is_number_integer()) throw SchemaError("node_ids", "expected integers");
                g.node_features.ids.push_back(id.get<std::int32_t>());
            }
        } else {
            for (int i = 0; i < g.num_nodes; ++i) g.node_features.ids.push_back(i + 1);
        }
    } catch (const json::exception& e) {
        throw SchemaError("graph", e.what());
    }
    try {
        g.validate();
    } catch (const InvalidArgument& e) {
        throw SchemaError("edges", e.what());
    }
    return g;
}

void write_graph(const EntityGraph& g, const std::filesystem::path& path) { write_file(path, graph_to_json(g)); }

EntityGraph read_graph(const std::filesystem::path& path) { return graph_from_json(read_file(path)); }

}  // namespace histograph::graph
