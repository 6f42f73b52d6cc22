#pragma once

// GIN and PNA message passing with hand-written reverse mode.
//
// Node features are row vectors: H is N x d and a dense layer maps
// H -> H W + 1 b with W of shape in x out and b of shape 1 x out.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "histograph/graph.hpp"

namespace histograph::gnn {

enum class LayerType { Gin, Pna };
enum class Readout { Mean, Sum };

LayerType parse_layer_type(const std::string& s);
std::string layer_type_name(LayerType t);
Readout parse_readout(const std::string& s);
std::string readout_name(Readout r);

struct GnnConfig {
    LayerType layer = LayerType::Gin;
    int input_dim = 1;
    int num_layers = 3;
    int hidden = 32;
    int mlp_depth = 2;     // dense layers inside each GIN layer
    int head_hidden = 32;
    int head_depth = 2;    // dense layers in the classifier head; 0 = node encoder only
    Readout readout = Readout::Mean;
    int num_classes = 2;
    double gin_eps = 0.0;
    double pna_delta = 0.0;  // <= 0: filled in from the training set

    void validate() const;
};

struct Dense {
    Eigen::MatrixXd weight;  // in x out
    Eigen::MatrixXd bias;    // 1 x out
};

struct GnnParams {
    std::vector<std::vector<Dense>> layers;
    std::vector<Dense> head;

    /// Every tensor with a stable name ("layer0.dense1.weight", "head0.bias").
    std::vector<std::pair<std::string, Eigen::MatrixXd*>> tensors();
    std::vector<std::pair<std::string, const Eigen::MatrixXd*>> tensors() const;
    GnnParams zeros_like() const;
};

struct GnnModel {
    GnnConfig config;
    GnnParams params;
    std::uint64_t seed = 0;
};

/// Glorot-uniform weights, zero biases.
GnnModel init_model(const GnnConfig& config, std::uint64_t seed);

/// Mean over nodes of log(degree + 1); 1 when every node is isolated.
double degree_normalizer(const std::vector<const graph::EntityGraph*>& graphs);

struct LayerCache {
    Eigen::MatrixXd input;               // H_l
    Eigen::MatrixXd aggregated;          // GIN: (1+eps)H + AH; PNA: [self | 12 scaled aggregates]
    std::vector<Eigen::MatrixXd> pre;    // per dense, before ReLU
    std::vector<Eigen::MatrixXd> post;   // per dense, after ReLU
    Eigen::MatrixXi argmin, argmax;      // PNA only
    Eigen::MatrixXd mean, stddev;        // PNA only
};

struct ForwardCache {
    std::vector<std::vector<int>> adj;
    std::vector<LayerCache> layers;
    Eigen::RowVectorXd readout;
    std::vector<Eigen::RowVectorXd> head_in;   // input of each head dense
    std::vector<Eigen::RowVectorXd> head_pre;  // output of each head dense before ReLU
    Eigen::RowVectorXd logits;

    /// Node activations: 0 = input features, l + 1 = output of layer l.
    const Eigen::MatrixXd& nodes(int level) const;
    const Eigen::MatrixXd& output() const { return nodes(static_cast<int>(layers.size())); }
};

ForwardCache forward(const GnnModel& model, const Eigen::MatrixXd& x, const std::vector<std::vector<int>>& adj);
ForwardCache forward(const GnnModel& model, const graph::EntityGraph& g);
Eigen::RowVectorXd logits(const GnnModel& model, const graph::EntityGraph& g);

struct Gradients {
    GnnParams params;
    /// d/d nodes(level), same indexing as ForwardCache::nodes.
    std::vector<Eigen::MatrixXd> nodes;
};

/// Reverse pass for an arbitrary upstream gradient on the logits.
Gradients backward(const GnnModel& model, const ForwardCache& cache, const Eigen::RowVectorXd& dlogits);

/// Reverse pass starting from a gradient on the last layer's node output.
Gradients backward_nodes(const GnnModel& model, const ForwardCache& cache, const Eigen::MatrixXd& doutput);

Eigen::RowVectorXd softmax(const Eigen::RowVectorXd& z);
double cross_entropy(const Eigen::RowVectorXd& logits, int label);
/// d cross_entropy / d logits.
Eigen::RowVectorXd cross_entropy_grad(const Eigen::RowVectorXd& logits, int label);

struct Prediction {
    int label = 0;
    Eigen::RowVectorXd probabilities;
};

/// argmax with ties to the lower class.
Prediction predict_from_logits(const Eigen::RowVectorXd& logits);
Prediction predict(const GnnModel& model, const graph::EntityGraph& g);

// Hierarchical cell-to-tissue model.

struct HactModel {
    GnnModel cell;    // node encoder, head_depth = 0
    GnnModel tissue;  // input = tissue features ++ pooled cell embedding
};

HactModel init_hact(const GnnConfig& cell, const GnnConfig& tissue, std::uint64_t seed);

struct HactCache {
    ForwardCache cell;
    ForwardCache tissue;
    std::vector<int> assignment;  // -1 entries are ignored
    std::vector<int> counts;      // cells per tissue node
};

/// Mean of cell embeddings per tissue node (zero rows for empty nodes).
Eigen::MatrixXd pool_cells(const Eigen::MatrixXd& cell_embeddings, const std::vector<int>& assignment,
                           int num_tissue, std::vector<int>* counts = nullptr);

HactCache hact_forward(const HactModel& model, const graph::EntityGraph& cells, const graph::EntityGraph& tissue,
                       const std::vector<int>& assignment);

struct HactGradients {
    Gradients cell;
    Gradients tissue;
};

HactGradients hact_backward(const HactModel& model, const HactCache& cache, const Eigen::RowVectorXd& dlogits);

/// Checkpoints: {"kind":"gnn"|"hact", "config", "parameters":[{name, shape, values}], "seed"}.
std::string model_to_json(const GnnModel& model);
GnnModel model_from_json(const std::string& text);
std::string hact_to_json(const HactModel& model);
HactModel hact_from_json(const std::string& text);
void write_model(const GnnModel& model, const std::filesystem::path& path);
GnnModel read_model(const std::filesystem::path& path);

}  // namespace histograph::gnn
