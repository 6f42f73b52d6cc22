#include "histograph/gnn.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "histograph/error.hpp"
#include "histograph/image_io.hpp"
#include "histograph/random.hpp"

namespace histograph::gnn {

using json = nlohmann::json;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;

LayerType parse_layer_type(const std::string& s) {
    if (s == "gin") return LayerType::Gin;
    if (s == "pna") return LayerType::Pna;
    throw InvalidArgument("unknown layer type \"" + s + "\" (expected gin|pna)");
}

std::string layer_type_name(LayerType t) { return t == LayerType::Gin ? "gin" : "pna"; }

Readout parse_readout(const std::string& s) {
    if (s == "mean") return Readout::Mean;
    if (s == "sum") return Readout::Sum;
    throw InvalidArgument("unknown readout \"" + s + "\" (expected mean|sum)");
}

std::string readout_name(Readout r) { return r == Readout::Mean ? "mean" : "sum"; }

void GnnConfig::validate() const {
    if (input_dim < 1) throw InvalidArgument("gnn: input_dim must be >= 1");
    if (num_layers < 1) throw InvalidArgument("gnn: num_layers must be >= 1");
    if (hidden < 1) throw InvalidArgument("gnn: hidden must be >= 1");
    if (mlp_depth < 1) throw InvalidArgument("gnn: mlp_depth must be >= 1");
    if (head_depth < 0) throw InvalidArgument("gnn: head_depth must be >= 0");
    if (head_depth > 1 && head_hidden < 1) throw InvalidArgument("gnn: head_hidden must be >= 1");
    if (num_classes < 2) throw InvalidArgument("gnn: num_classes must be >= 2");
    if (!std::isfinite(gin_eps) || !std::isfinite(pna_delta)) throw InvalidArgument("gnn: non-finite constant");
}

std::vector<std::pair<std::string, MatrixXd*>> GnnParams::tensors() {
    std::vector<std::pair<std::string, MatrixXd*>> out;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        for (std::size_t j = 0; j < layers[l].size(); ++j) {
            const std::string base = "layer" + std::to_string(l) + ".dense" + std::to_string(j);
            out.emplace_back(base + ".weight", &layers[l][j].weight);
            out.emplace_back(base + ".bias", &layers[l][j].bias);
        }
    }
    for (std::size_t j = 0; j < head.size(); ++j) {
        out.emplace_back("head" + std::to_string(j) + ".weight", &head[j].weight);
        out.emplace_back("head" + std::to_string(j) + ".bias", &head[j].bias);
    }
    return out;
}

std::vector<std::pair<std::string, const MatrixXd*>> GnnParams::tensors() const {
    std::vector<std::pair<std::string, const MatrixXd*>> out;
    for (auto& [name, t] : const_cast<GnnParams*>(this)->tensors()) out.emplace_back(name, t);
    return out;
}

GnnParams GnnParams::zeros_like() const {
    GnnParams z = *this;
    for (auto& [name, t] : z.tensors()) t->setZero();
    return z;
}

namespace {

Dense glorot(int in, int out, Rng& rng) {
    Dense d;
    const double limit = std::sqrt(6.0 / (in + out));
    d.weight.resize(in, out);
    for (int r = 0; r < in; ++r) {
        for (int c = 0; c < out; ++c) d.weight(r, c) = rng.uniform(-limit, limit);
    }
    d.bias = MatrixXd::Zero(1, out);
    return d;
}

int layer_input_dim(const GnnConfig& c, int l) { return l == 0 ? c.input_dim : c.hidden; }

}  // namespace

GnnModel init_model(const GnnConfig& config, std::uint64_t seed) {
    config.validate();
    GnnModel m;
    m.config = config;
    m.seed = seed;
    Rng rng(seed);
    for (int l = 0; l < config.num_layers; ++l) {
        const int in = layer_input_dim(config, l);
        std::vector<Dense> layer;
        if (config.layer == LayerType::Gin) {
            for (int j = 0; j < config.mlp_depth; ++j) layer.push_back(glorot(j == 0 ? in : config.hidden, config.hidden, rng));
        } else {
            layer.push_back(glorot(13 * in, config.hidden, rng));
        }
        m.params.layers.push_back(std::move(layer));
    }
    for (int j = 0; j < config.head_depth; ++j) {
        const int in = j == 0 ? config.hidden : config.head_hidden;
        const int out = j == config.head_depth - 1 ? config.num_classes : config.head_hidden;
        m.params.head.push_back(glorot(in, out, rng));
    }
    return m;
}

double degree_normalizer(const std::vector<const graph::EntityGraph*>& graphs) {
    double sum = 0.0;
    long long n = 0;
    for (const auto* g : graphs) {
        std::vector<int> deg(static_cast<std::size_t>(g->num_nodes), 0);
        for (const auto& [u, v] : g->edges) {
            ++deg[u];
            ++deg[v];
        }
        for (int d : deg) sum += std::log(d + 1.0);
        n += g->num_nodes;
    }
    const double delta = n > 0 ? sum / double(n) : 0.0;
    return delta > 0.0 ? delta : 1.0;
}

const MatrixXd& ForwardCache::nodes(int level) const {
    if (level == 0) return layers.front().input;
    return layers[static_cast<std::size_t>(level - 1)].post.back();
}

namespace {

// NaN passes through, unlike cwiseMax, so a non-finite input reaches the loss.
template <typename M>
M relu(const M& x) {
    return x.unaryExpr([](double v) { return v < 0.0 ? 0.0 : v; });
}

MatrixXd affine(const MatrixXd& x, const Dense& d) {
    MatrixXd y = x * d.weight;
    y.rowwise() += d.bias.row(0);
    return y;
}

constexpr int kPnaBlocks = 13;

std::array<double, 3> pna_scalers(std::size_t degree, double delta) {
    if (degree == 0) return {0.0, 0.0, 0.0};
    const double l = std::log(double(degree) + 1.0);
    return {1.0, l / delta, delta / l};
}

void pna_aggregate(const MatrixXd& h, const std::vector<std::vector<int>>& adj, double delta, LayerCache& lc) {
    const Eigen::Index n = h.rows(), d = h.cols();
    lc.aggregated = MatrixXd::Zero(n, kPnaBlocks * d);
    lc.aggregated.leftCols(d) = h;
    lc.argmin = Eigen::MatrixXi::Constant(n, d, -1);
    lc.argmax = Eigen::MatrixXi::Constant(n, d, -1);
    lc.mean = MatrixXd::Zero(n, d);
    lc.stddev = MatrixXd::Zero(n, d);
    for (Eigen::Index v = 0; v < n; ++v) {
        const auto& nb = adj[static_cast<std::size_t>(v)];
        if (nb.empty()) continue;
        const auto s = pna_scalers(nb.size(), delta);
        for (Eigen::Index k = 0; k < d; ++k) {
            double sum = 0.0;
            int lo = nb[0], hi = nb[0];
            for (int u : nb) {
                const double x = h(u, k);
                sum += x;
                if (x < h(lo, k)) lo = u;
                if (x > h(hi, k)) hi = u;
            }
            const double mu = sum / double(nb.size());
            double var = 0.0;
            for (int u : nb) var += (h(u, k) - mu) * (h(u, k) - mu);
            const double sd = std::sqrt(var / double(nb.size()));
            lc.argmin(v, k) = lo;
            lc.argmax(v, k) = hi;
            lc.mean(v, k) = mu;
            lc.stddev(v, k) = sd;
            const double agg[4] = {mu, h(lo, k), h(hi, k), sd};
            for (int si = 0; si < 3; ++si) {
                for (int ai = 0; ai < 4; ++ai) lc.aggregated(v, d * (1 + si * 4 + ai) + k) = s[si] * agg[ai];
            }
        }
    }
}

MatrixXd pna_backward(const MatrixXd& dagg, const LayerCache& lc, const std::vector<std::vector<int>>& adj,
                      double delta) {
    const MatrixXd& h = lc.input;
    const Eigen::Index n = h.rows(), d = h.cols();
    MatrixXd dh = dagg.leftCols(d);
    for (Eigen::Index v = 0; v < n; ++v) {
        const auto& nb = adj[static_cast<std::size_t>(v)];
        if (nb.empty()) continue;
        const auto s = pna_scalers(nb.size(), delta);
        const double inv_deg = 1.0 / double(nb.size());
        for (Eigen::Index k = 0; k < d; ++k) {
            double g[4] = {0, 0, 0, 0};
            for (int si = 0; si < 3; ++si) {
                for (int ai = 0; ai < 4; ++ai) g[ai] += s[si] * dagg(v, d * (1 + si * 4 + ai) + k);
            }
            const double sd = lc.stddev(v, k), mu = lc.mean(v, k);
            for (int u : nb) {
                dh(u, k) += g[0] * inv_deg;
                if (sd > 0.0) dh(u, k) += g[3] * (h(u, k) - mu) * inv_deg / sd;
            }
            dh(lc.argmin(v, k), k) += g[1];
            dh(lc.argmax(v, k), k) += g[2];
        }
    }
    return dh;
}

MatrixXd gin_aggregate(const MatrixXd& h, const std::vector<std::vector<int>>& adj, double eps) {
    MatrixXd z = (1.0 + eps) * h;
    for (std::size_t v = 0; v < adj.size(); ++v) {
        for (int u : adj[v]) z.row(static_cast<Eigen::Index>(v)) += h.row(u);
    }
    return z;
}

}  // namespace

ForwardCache forward(const GnnModel& model, const MatrixXd& x, const std::vector<std::vector<int>>& adj) {
    const auto& cfg = model.config;
    if (x.cols() != cfg.input_dim) {
        throw InvalidArgument("gnn: graph has " + std::to_string(x.cols()) + " features, model expects " +
                              std::to_string(cfg.input_dim));
    }
    if (static_cast<Eigen::Index>(adj.size()) != x.rows()) throw InvalidArgument("gnn: adjacency size mismatch");
    if (cfg.layer == LayerType::Pna && !(cfg.pna_delta > 0.0)) {
        throw InvalidArgument("gnn: PNA degree normalizer delta must be > 0");
    }
    ForwardCache cache;
    cache.adj = adj;
    MatrixXd h = x;
    for (const auto& layer : model.params.layers) {
        LayerCache lc;
        lc.input = h;
        if (cfg.layer == LayerType::Gin) {
            lc.aggregated = gin_aggregate(h, adj, cfg.gin_eps);
        } else {
            pna_aggregate(h, adj, cfg.pna_delta, lc);
        }
        const MatrixXd* in = &lc.aggregated;
        for (const auto& dense : layer) {
            lc.pre.push_back(affine(*in, dense));
            lc.post.push_back(relu(lc.pre.back()));
            in = &lc.post.back();
        }
        h = lc.post.back();
        cache.layers.push_back(std::move(lc));
    }
    if (cfg.head_depth == 0) return cache;

    cache.readout = h.rows() > 0 ? RowVectorXd(h.colwise().sum()) : RowVectorXd::Zero(h.cols());
    if (cfg.readout == Readout::Mean && h.rows() > 0) cache.readout /= double(h.rows());
    RowVectorXd a = cache.readout;
    for (std::size_t j = 0; j < model.params.head.size(); ++j) {
        cache.head_in.push_back(a);
        const RowVectorXd z = a * model.params.head[j].weight + model.params.head[j].bias;
        cache.head_pre.push_back(z);
        a = j + 1 < model.params.head.size() ? relu(z) : z;
    }
    cache.logits = a;
    return cache;
}

ForwardCache forward(const GnnModel& model, const graph::EntityGraph& g) {
    return forward(model, g.node_features.values, g.adjacency());
}

RowVectorXd logits(const GnnModel& model, const graph::EntityGraph& g) { return forward(model, g).logits; }

Gradients backward_nodes(const GnnModel& model, const ForwardCache& cache, const MatrixXd& doutput) {
    const auto& cfg = model.config;
    Gradients grads;
    if (grads.params.layers.empty()) grads.params = model.params.zeros_like();
    const auto levels = cache.layers.size() + 1;
    grads.nodes.assign(levels, MatrixXd());
    MatrixXd g = doutput;
    for (std::size_t l = cache.layers.size(); l-- > 0;) {
        grads.nodes[l + 1] = g;
        const LayerCache& lc = cache.layers[l];
        const auto& layer = model.params.layers[l];
        for (std::size_t j = layer.size(); j-- > 0;) {
            g = g.cwiseProduct((lc.pre[j].array() > 0.0).cast<double>().matrix());
            const MatrixXd& in = j == 0 ? lc.aggregated : lc.post[j - 1];
            grads.params.layers[l][j].weight += in.transpose() * g;
            grads.params.layers[l][j].bias += g.colwise().sum();
            g = g * layer[j].weight.transpose();
        }
        if (cfg.layer == LayerType::Gin) {
            g = gin_aggregate(g, cache.adj, cfg.gin_eps);  // A is symmetric
        } else {
            g = pna_backward(g, lc, cache.adj, cfg.pna_delta);
        }
    }
    grads.nodes[0] = g;
    return grads;
}

Gradients backward(const GnnModel& model, const ForwardCache& cache, const RowVectorXd& dlogits) {
    const auto& head = model.params.head;
    if (head.empty()) throw InvalidArgument("gnn: model has no classifier head");
    GnnParams head_grads = model.params.zeros_like();
    RowVectorXd g = dlogits;
    for (std::size_t j = head.size(); j-- > 0;) {
        head_grads.head[j].weight += cache.head_in[j].transpose() * g;
        head_grads.head[j].bias += g;
        g = g * head[j].weight.transpose();
        if (j > 0) g = g.cwiseProduct((cache.head_pre[j - 1].array() > 0.0).cast<double>().matrix());
    }
    const MatrixXd& out = cache.output();
    MatrixXd dout = g.replicate(out.rows(), 1);
    if (model.config.readout == Readout::Mean && out.rows() > 0) dout /= double(out.rows());
    Gradients grads = backward_nodes(model, cache, dout);
    grads.params.head = std::move(head_grads.head);
    return grads;
}

RowVectorXd softmax(const RowVectorXd& z) {
    const RowVectorXd e = (z.array() - z.maxCoeff()).exp().matrix();
    return e / e.sum();
}

double cross_entropy(const RowVectorXd& logits, int label) {
    if (label < 0 || label >= logits.size()) throw InvalidArgument("label out of range");
    const double m = logits.maxCoeff();
    return std::log((logits.array() - m).exp().sum()) + m - logits(label);
}

RowVectorXd cross_entropy_grad(const RowVectorXd& logits, int label) {
    RowVectorXd g = softmax(logits);
    g(label) -= 1.0;
    return g;
}

Prediction predict_from_logits(const RowVectorXd& logits) {
    Prediction p;
    p.probabilities = softmax(logits);
    for (Eigen::Index i = 1; i < logits.size(); ++i) {
        if (logits(i) > logits(p.label)) p.label = static_cast<int>(i);
    }
    return p;
}

Prediction predict(const GnnModel& model, const graph::EntityGraph& g) { return predict_from_logits(logits(model, g)); }

HactModel init_hact(const GnnConfig& cell, const GnnConfig& tissue, std::uint64_t seed) {
    GnnConfig c = cell;
    c.head_depth = 0;
    HactModel m;
    m.cell = init_model(c, seed);
    GnnConfig t = tissue;
    if (t.input_dim <= c.hidden) throw InvalidArgument("hact: tissue input_dim must include the cell embedding");
    m.tissue = init_model(t, seed + 1);
    return m;
}

MatrixXd pool_cells(const MatrixXd& emb, const std::vector<int>& assignment, int num_tissue, std::vector<int>* counts) {
    if (static_cast<Eigen::Index>(assignment.size()) != emb.rows()) {
        throw InvalidArgument("hact: assignment length differs from the cell count");
    }
    MatrixXd pooled = MatrixXd::Zero(num_tissue, emb.cols());
    std::vector<int> n(static_cast<std::size_t>(num_tissue), 0);
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        const int t = assignment[i];
        if (t < -1 || t >= num_tissue) {
            throw InvalidArgument("hact: cell " + std::to_string(i) + " assigned to tissue node " + std::to_string(t) +
                                  " of " + std::to_string(num_tissue));
        }
        if (t < 0) continue;
        pooled.row(t) += emb.row(static_cast<Eigen::Index>(i));
        ++n[static_cast<std::size_t>(t)];
    }
    for (int t = 0; t < num_tissue; ++t) {
        if (n[static_cast<std::size_t>(t)] > 0) pooled.row(t) /= double(n[static_cast<std::size_t>(t)]);
    }
    if (counts) *counts = std::move(n);
    return pooled;
}

HactCache hact_forward(const HactModel& model, const graph::EntityGraph& cells, const graph::EntityGraph& tissue,
                       const std::vector<int>& assignment) {
    HactCache cache;
    cache.cell = forward(model.cell, cells);
    cache.assignment = assignment;
    const MatrixXd pooled = pool_cells(cache.cell.output(), assignment, tissue.num_nodes, &cache.counts);
    MatrixXd x(tissue.num_nodes, tissue.node_features.cols() + pooled.cols());
    x << tissue.node_features.values, pooled;
    cache.tissue = forward(model.tissue, x, tissue.adjacency());
    return cache;
}

HactGradients hact_backward(const HactModel& model, const HactCache& cache, const RowVectorXd& dlogits) {
    HactGradients out;
    out.tissue = backward(model.tissue, cache.tissue, dlogits);
    const MatrixXd& dx = out.tissue.nodes[0];
    const Eigen::Index hc = model.cell.config.hidden;
    const MatrixXd dpooled = dx.rightCols(hc);
    const MatrixXd& emb = cache.cell.output();
    MatrixXd demb = MatrixXd::Zero(emb.rows(), emb.cols());
    for (std::size_t i = 0; i < cache.assignment.size(); ++i) {
        const int t = cache.assignment[i];
        if (t < 0) continue;
        demb.row(static_cast<Eigen::Index>(i)) = dpooled.row(t) / double(cache.counts[static_cast<std::size_t>(t)]);
    }
    out.cell = backward_nodes(model.cell, cache.cell, demb);
    return out;
}

namespace {

json config_to_json(const GnnConfig& c) {
    return {{"layer", layer_type_name(c.layer)}, {"input_dim", c.input_dim},   {"num_layers", c.num_layers},
            {"hidden", c.hidden},                {"mlp_depth", c.mlp_depth},   {"head_hidden", c.head_hidden},
            {"head_depth", c.head_depth},        {"readout", readout_name(c.readout)},
            {"num_classes", c.num_classes},      {"gin_eps", c.gin_eps},       {"pna_delta", c.pna_delta}};
}

GnnConfig config_from_json(const json& j) {
    GnnConfig c;
    const auto get = [&](const char* key, auto& field) {
        if (!j.contains(key)) return;
        try {
            j[key].get_to(field);
        } catch (const json::exception&) {
            throw SchemaError(std::string("config.") + key, "wrong type");
        }
    };
    std::string layer = layer_type_name(c.layer), readout = readout_name(c.readout);
    get("layer", layer);
    get("readout", readout);
    c.layer = parse_layer_type(layer);
    c.readout = parse_readout(readout);
    get("input_dim", c.input_dim);
    get("num_layers", c.num_layers);
    get("hidden", c.hidden);
    get("mlp_depth", c.mlp_depth);
    get("head_hidden", c.head_hidden);
    get("head_depth", c.head_depth);
    get("num_classes", c.num_classes);
    get("gin_eps", c.gin_eps);
    get("pna_delta", c.pna_delta);
    c.validate();
    return c;
}

json model_json(const GnnModel& m) {
    json params = json::array();
    for (const auto& [name, t] : m.params.tensors()) {
        std::vector<double> values(static_cast<std::size_t>(t->size()));
        for (Eigen::Index r = 0; r < t->rows(); ++r) {
            for (Eigen::Index c = 0; c < t->cols(); ++c) values[static_cast<std::size_t>(r * t->cols() + c)] = (*t)(r, c);
        }
        params.push_back({{"name", name}, {"shape", {t->rows(), t->cols()}}, {"values", values}});
    }
    return {{"kind", "gnn"}, {"config", config_to_json(m.config)}, {"parameters", params}, {"seed", m.seed}};
}

GnnModel model_from(const json& j) {
    if (!j.contains("config")) throw SchemaError("config", "missing");
    if (!j.contains("parameters") || !j["parameters"].is_array()) throw SchemaError("parameters", "missing");
    GnnModel m = init_model(config_from_json(j["config"]), 0);
    if (j.contains("seed")) m.seed = j["seed"].get<std::uint64_t>();
    auto tensors = m.params.tensors();
    const auto& params = j["parameters"];
    if (params.size() != tensors.size()) {
        throw SchemaError("parameters", "expected " + std::to_string(tensors.size()) + " tensors");
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const auto& p = params[i];
        auto& [name, t] = tensors[i];
        if (!p.contains("name") || p["name"] != name) throw SchemaError("parameters", "expected tensor " + name);
        if (!p.contains("shape") || p["shape"] != json({t->rows(), t->cols()})) {
            throw SchemaError("parameters", name + " has the wrong shape");
        }
        const auto values = p.at("values").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(values.size()) != t->size()) throw SchemaError("parameters", name + " has the wrong size");
        for (Eigen::Index r = 0; r < t->rows(); ++r) {
            for (Eigen::Index c = 0; c < t->cols(); ++c) (*t)(r, c) = values[static_cast<std::size_t>(r * t->cols() + c)];
        }
    }
    return m;
}

json parse_json(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError("model", std::string("invalid JSON: ") + e.what());
    }
}

}  // namespace

std::string model_to_json(const GnnModel& model) { return model_json(model).dump(); }

GnnModel model_from_json(const std::string& text) {
    const json j = parse_json(text);
    if (j.value("kind", "gnn") != "gnn") throw SchemaError("kind", "expected \"gnn\"");
    try {
        return model_from(j);
    } catch (const json::exception& e) {
        throw SchemaError("parameters", e.what());
    }
}

std::string hact_to_json(const HactModel& model) {
    return json{{"kind", "hact"}, {"cell", model_json(model.cell)}, {"tissue", model_json(model.tissue)}}.dump();
}

HactModel hact_from_json(const std::string& text) {
    const json j = parse_json(text);
    if (j.value("kind", "") != "hact") throw SchemaError("kind", "expected \"hact\"");
    if (!j.contains("cell") || !j.contains("tissue")) throw SchemaError("cell", "hact checkpoint needs cell and tissue");
    try {
        return HactModel{model_from(j["cell"]), model_from(j["tissue"])};
    } catch (const json::exception& e) {
        throw SchemaError("parameters", e.what());
    }
}

void write_model(const GnnModel& model, const std::filesystem::path& path) { write_file(path, model_to_json(model)); }

GnnModel read_model(const std::filesystem::path& path) { return model_from_json(read_file(path)); }

}  // namespace histograph::gnn
