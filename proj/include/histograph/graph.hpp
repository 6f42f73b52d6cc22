#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "histograph/features.hpp"
#include "histograph/image.hpp"

namespace histograph::graph {

using Edge = std::pair<int, int>;

/// Undirected graph over entities: edges (u, v) with u < v, sorted, unique.
struct EntityGraph {
    int num_nodes = 0;
    std::vector<Edge> edges;
    features::FeatureMatrix node_features;
    std::vector<Point> centroids;

    const std::vector<std::string>& feature_names() const { return node_features.names; }
    int feature_dim() const { return static_cast<int>(node_features.cols()); }

    /// Neighbour lists in ascending order.
    std::vector<std::vector<int>> adjacency() const;

    /// Throws InvalidArgument when an invariant is broken.
    void validate() const;

    friend bool operator==(const EntityGraph&, const EntityGraph&) = default;
};

struct KnnParams {
    int k = 5;
    std::optional<double> threshold = 50.0;  // pixels; unset keeps every candidate

    void validate() const;
};

/// Outgoing candidates of every node: its k nearest other centroids (ties by
/// lower index) within the threshold, nearest first.
std::vector<std::vector<int>> knn_candidates(const std::vector<Point>& centroids, const KnnParams& params);

/// Union of all kNN candidate pairs.
EntityGraph build_knn_graph(const EntityTable& table, const features::FeatureMatrix& feats,
                            const KnnParams& params = {});

/// Region adjacency graph: an edge for every pair of regions that touch
/// under 8-adjacency. Node i is table[i].
EntityGraph build_rag(const LabelMap& labels, const features::FeatureMatrix& feats, const EntityTable& table);

/// Index into `tissue_table` of the region under each cell centroid, or -1
/// when the centroid lies on background.
std::vector<int> assign_to_regions(const EntityTable& cells, const LabelMap& tissue_labels,
                                   const EntityTable& tissue_table);

/// JSON with keys num_nodes, edges, node_features, centroids, feature_names
/// and node_ids.
std::string graph_to_json(const EntityGraph& g);
EntityGraph graph_from_json(const std::string& text);
void write_graph(const EntityGraph& g, const std::filesystem::path& path);
EntityGraph read_graph(const std::filesystem::path& path);

}  // namespace histograph::graph
