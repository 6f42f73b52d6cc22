#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "histograph/gnn.hpp"

namespace histograph::explain {

enum class Method { GradCam, GradCamPP, GnnExplainer, Lrp };

Method parse_method(const std::string& name);  // gradcam|gradcampp|gnnexplainer|lrp
std::string method_name(Method m);

struct Saliency {
    std::vector<double> scores;  // one per node
    int target_class = 0;
    std::string method;
};

/// Min-max rescaling to [0, 1]. A constant map becomes all 1 when its value
/// is positive and all 0 otherwise.
std::vector<double> normalize_scores(std::vector<double> s);

struct CamParams {
    int layer = -1;          // GNN layer whose output is explained; -1 = last
    bool normalize = true;
};

Saliency graph_gradcam(const gnn::GnnModel& model, const graph::EntityGraph& g, int target, const CamParams& p = {});
Saliency graph_gradcam_pp(const gnn::GnnModel& model, const graph::EntityGraph& g, int target, const CamParams& p = {});

struct MaskParams {
    int steps = 100;
    double lr = 0.01;
    double lambda_sparsity = 0.05;
    double lambda_entropy = 0.1;
    std::uint64_t seed = 0;
    /// Mask logits to start from; drawn from N(0, 0.1) with `seed` when unset.
    std::optional<std::vector<double>> initial_logits;
};

struct MaskResult {
    Saliency saliency;
    std::vector<double> objective;  // after each step
};

/// Learns a sigmoid node mask on the input features by Adam.
MaskResult gnn_explainer(const gnn::GnnModel& model, const graph::EntityGraph& g, int target, const MaskParams& p = {});

/// Epsilon-rule relevance from logit `target` back to the nodes, GIN only.
Saliency graph_lrp(const gnn::GnnModel& model, const graph::EntityGraph& g, int target, double eps = 1e-6);

Saliency run(Method method, const gnn::GnnModel& model, const graph::EntityGraph& g, int target,
             const MaskParams& mask = {}, const CamParams& cam = {});

/// Ids of the k highest-scoring nodes, ties to the lower id.
std::vector<std::int32_t> top_k_entities(const Saliency& s, const std::vector<std::int32_t>& ids, int k);
std::vector<std::int32_t> top_k_entities(const Saliency& s, const EntityTable& table, int k);

/// Draws every node as a filled disk shaded from blue (0) to red (max score).
Image render_overlay(const Image& base, const graph::EntityGraph& g, const Saliency& s, int radius = 4);

/// {"scores":[...], "class": c, "method": name}
std::string saliency_to_json(const Saliency& s);
Saliency saliency_from_json(const std::string& text);

}  // namespace histograph::explain
