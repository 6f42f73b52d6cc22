#include "histograph/explain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "histograph/error.hpp"
#include "histograph/random.hpp"

namespace histograph::explain {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using json = nlohmann::json;

Method parse_method(const std::string& name) {
    if (name == "gradcam") return Method::GradCam;
    if (name == "gradcampp") return Method::GradCamPP;
    if (name == "gnnexplainer") return Method::GnnExplainer;
    if (name == "lrp") return Method::Lrp;
    throw InvalidArgument("unknown explainer \"" + name + "\" (expected gradcam|gradcampp|gnnexplainer|lrp)");
}

std::string method_name(Method m) {
    switch (m) {
        case Method::GradCam: return "gradcam";
        case Method::GradCamPP: return "gradcampp";
        case Method::GnnExplainer: return "gnnexplainer";
        case Method::Lrp: return "lrp";
    }
    return "";
}

std::vector<double> normalize_scores(std::vector<double> s) {
    if (s.empty()) return s;
    const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
    const double mn = *lo, mx = *hi;
    for (auto& v : s) {
        if (mx > mn) v = (v - mn) / (mx - mn);
        else v = mx > 0.0 ? 1.0 : 0.0;
    }
    return s;
}

namespace {

void check_target(const gnn::GnnModel& model, int target) {
    if (target < 0 || target >= model.config.num_classes) {
        throw InvalidArgument("explain: class " + std::to_string(target) + " outside [0, " +
                              std::to_string(model.config.num_classes) + ")");
    }
}

int resolve_layer(const gnn::GnnModel& model, int layer) {
    const int n = model.config.num_layers;
    if (layer == -1) return n - 1;
    if (layer < 0 || layer >= n) throw InvalidArgument("explain: layer " + std::to_string(layer) + " does not exist");
    return layer;
}

struct CamInputs {
    MatrixXd activations;  // A, N x K
    MatrixXd gradients;    // dy_c / dA
};

CamInputs cam_inputs(const gnn::GnnModel& model, const graph::EntityGraph& g, int target, int layer) {
    check_target(model, target);
    const int level = resolve_layer(model, layer) + 1;
    const auto cache = gnn::forward(model, g);
    RowVectorXd onehot = RowVectorXd::Zero(model.config.num_classes);
    onehot(target) = 1.0;
    const auto grads = gnn::backward(model, cache, onehot);
    return {cache.nodes(level), grads.nodes[static_cast<std::size_t>(level)]};
}

Saliency finish(std::vector<double> scores, int target, Method m, bool normalize) {
    return {normalize ? normalize_scores(std::move(scores)) : std::move(scores), target, method_name(m)};
}

}  // namespace

Saliency graph_gradcam(const gnn::GnnModel& model, const graph::EntityGraph& g, int target, const CamParams& p) {
    const auto [a, grad] = cam_inputs(model, g, target, p.layer);
    std::vector<double> s(static_cast<std::size_t>(a.rows()), 0.0);
    if (a.rows() > 0) {
        const RowVectorXd alpha = grad.colwise().mean();
        for (Eigen::Index v = 0; v < a.rows(); ++v) s[static_cast<std::size_t>(v)] = std::max(0.0, a.row(v).dot(alpha));
    }
    return finish(std::move(s), target, Method::GradCam, p.normalize);
}

Saliency graph_gradcam_pp(const gnn::GnnModel& model, const graph::EntityGraph& g, int target, const CamParams& p) {
    const auto [a, grad] = cam_inputs(model, g, target, p.layer);
    std::vector<double> s(static_cast<std::size_t>(a.rows()), 0.0);
    if (a.rows() > 0) {
        const RowVectorXd act_sum = a.colwise().sum();
        RowVectorXd w = RowVectorXd::Zero(a.cols());
        for (Eigen::Index v = 0; v < a.rows(); ++v) {
            for (Eigen::Index k = 0; k < a.cols(); ++k) {
                const double g1 = grad(v, k), g2 = g1 * g1, g3 = g2 * g1;
                const double denom = 2.0 * g2 + act_sum(k) * g3;
                const double alpha = denom != 0.0 ? g2 / denom : 0.0;
                w(k) += alpha * std::max(0.0, g1);
            }
        }
        for (Eigen::Index v = 0; v < a.rows(); ++v) s[static_cast<std::size_t>(v)] = std::max(0.0, a.row(v).dot(w));
    }
    return finish(std::move(s), target, Method::GradCamPP, p.normalize);
}

MaskResult gnn_explainer(const gnn::GnnModel& model, const graph::EntityGraph& g, int target, const MaskParams& p) {
    check_target(model, target);
    if (p.steps < 1) throw InvalidArgument("gnnexplainer: steps must be >= 1");
    if (!(p.lr > 0.0)) throw InvalidArgument("gnnexplainer: lr must be > 0");
    const Eigen::Index n = g.num_nodes;
    const auto adj = g.adjacency();
    const MatrixXd& x = g.node_features.values;

    Eigen::VectorXd m(n);
    if (p.initial_logits) {
        if (static_cast<Eigen::Index>(p.initial_logits->size()) != n) {
            throw InvalidArgument("gnnexplainer: initial logits length differs from the node count");
        }
        for (Eigen::Index v = 0; v < n; ++v) m(v) = (*p.initial_logits)[static_cast<std::size_t>(v)];
    } else {
        Rng rng(p.seed);
        for (Eigen::Index v = 0; v < n; ++v) m(v) = 0.1 * rng.normal();
    }

    constexpr double kB1 = 0.9, kB2 = 0.999, kEps = 1e-8, kLogFloor = 1e-12;
    Eigen::VectorXd mom = Eigen::VectorXd::Zero(n), vel = Eigen::VectorXd::Zero(n);
    MaskResult result;
    const double inv_n = n > 0 ? 1.0 / double(n) : 0.0;
    const auto sigmoid = [](const Eigen::VectorXd& z) { return Eigen::VectorXd((1.0 + (-z.array()).exp()).inverse()); };

    for (int step = 1; step <= p.steps; ++step) {
        const Eigen::VectorXd s = sigmoid(m);
        const MatrixXd masked = x.array().colwise() * s.array();
        const auto cache = gnn::forward(model, masked, adj);
        const double pred = gnn::cross_entropy(cache.logits, target);
        double entropy = 0.0;
        for (Eigen::Index v = 0; v < n; ++v) {
            const double q = std::clamp(s(v), kLogFloor, 1.0 - kLogFloor);
            entropy += -q * std::log(q) - (1.0 - q) * std::log(1.0 - q);
        }
        const double objective = pred + p.lambda_sparsity * s.sum() * inv_n + p.lambda_entropy * entropy * inv_n;
        if (!std::isfinite(objective)) {
            throw NumericalError("gnnexplainer: non-finite objective at step " + std::to_string(step));
        }
        result.objective.push_back(objective);

        const auto grads = gnn::backward(model, cache, gnn::cross_entropy_grad(cache.logits, target));
        const Eigen::VectorXd dmask = grads.nodes[0].cwiseProduct(x).rowwise().sum();
        Eigen::VectorXd dm(n);
        for (Eigen::Index v = 0; v < n; ++v) {
            const double q = std::clamp(s(v), kLogFloor, 1.0 - kLogFloor);
            const double ds = dmask(v) + p.lambda_sparsity * inv_n + p.lambda_entropy * inv_n * std::log((1.0 - q) / q);
            dm(v) = ds * s(v) * (1.0 - s(v));
        }
        mom = kB1 * mom + (1.0 - kB1) * dm;
        vel = kB2 * vel + (1.0 - kB2) * dm.cwiseProduct(dm);
        const double c1 = 1.0 - std::pow(kB1, step), c2 = 1.0 - std::pow(kB2, step);
        m -= (p.lr * (mom / c1).array() / ((vel / c2).array().sqrt() + kEps)).matrix();
    }
    const Eigen::VectorXd s = sigmoid(m);
    result.saliency = {std::vector<double>(s.data(), s.data() + s.size()), target, method_name(Method::GnnExplainer)};
    return result;
}

namespace {

MatrixXd stabilized(const MatrixXd& z, double eps) {
    return z.unaryExpr([eps](double v) { return v + (v >= 0.0 ? eps : -eps); });
}

// Epsilon rule through y = a W (+ b, whose share is absorbed by the inputs).
// An output whose inputs contribute exactly zero (a pure-bias unit) falls
// back to the flat rule and splits its relevance evenly over its inputs.
MatrixXd lrp_dense(const MatrixXd& a, const MatrixXd& w, const MatrixXd& r, double eps) {
    const MatrixXd z = a * w;
    const MatrixXd ratio = r.cwiseQuotient(stabilized(z, eps));
    MatrixXd out = a.cwiseProduct(ratio * w.transpose());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        for (Eigen::Index j = 0; j < z.cols(); ++j) {
            if (z(i, j) == 0.0 && r(i, j) != 0.0) out.row(i).array() += r(i, j) / double(a.cols());
        }
    }
    return out;
}

}  // namespace

Saliency graph_lrp(const gnn::GnnModel& model, const graph::EntityGraph& g, int target, double eps) {
    check_target(model, target);
    if (model.config.layer != gnn::LayerType::Gin) throw InvalidArgument("lrp is defined for GIN models only");
    const auto cache = gnn::forward(model, g);
    const auto& head = model.params.head;

    MatrixXd r = MatrixXd::Zero(1, model.config.num_classes);
    r(0, target) = cache.logits(target);
    for (std::size_t j = head.size(); j-- > 0;) r = lrp_dense(cache.head_in[j], head[j].weight, r, eps);

    const MatrixXd& h = cache.output();
    MatrixXd rn(h.rows(), h.cols());
    if (h.rows() > 0) {
        const RowVectorXd colsum = h.colwise().sum();
        const RowVectorXd ratio = r.row(0).cwiseQuotient(stabilized(colsum, eps).row(0));
        rn = h.array().rowwise() * ratio.array();
        for (Eigen::Index k = 0; k < h.cols(); ++k) {
            if (colsum(k) == 0.0) rn.col(k).setConstant(r(0, k) / double(h.rows()));
        }
    }

    for (std::size_t l = cache.layers.size(); l-- > 0;) {
        const auto& lc = cache.layers[l];
        const auto& layer = model.params.layers[l];
        for (std::size_t j = layer.size(); j-- > 0;) {
            rn = lrp_dense(j == 0 ? lc.aggregated : lc.post[j - 1], layer[j].weight, rn, eps);
        }
        // Each aggregated entry (1+eps)h_v + sum h_u passes relevance back in
        // proportion to the terms.
        // An all-zero entry splits evenly over its deg + 1 terms instead.
        const MatrixXd ratio = rn.cwiseQuotient(stabilized(lc.aggregated, eps));
        MatrixXd back = (1.0 + model.config.gin_eps) * ratio;
        MatrixXd flat = MatrixXd::Zero(rn.rows(), rn.cols());
        for (std::size_t v = 0; v < cache.adj.size(); ++v) {
            const auto vi = static_cast<Eigen::Index>(v);
            for (int u : cache.adj[v]) back.row(u) += ratio.row(vi);
            for (Eigen::Index k = 0; k < rn.cols(); ++k) {
                if (lc.aggregated(vi, k) != 0.0 || rn(vi, k) == 0.0) continue;
                const double share = rn(vi, k) / double(cache.adj[v].size() + 1);
                flat(vi, k) += share;
                for (int u : cache.adj[v]) flat(u, k) += share;
            }
        }
        rn = lc.input.cwiseProduct(back) + flat;
    }
    const Eigen::VectorXd per_node = rn.rowwise().sum();
    return {std::vector<double>(per_node.data(), per_node.data() + per_node.size()), target, method_name(Method::Lrp)};
}

Saliency run(Method method, const gnn::GnnModel& model, const graph::EntityGraph& g, int target, const MaskParams& mask,
             const CamParams& cam) {
    switch (method) {
        case Method::GradCam: return graph_gradcam(model, g, target, cam);
        case Method::GradCamPP: return graph_gradcam_pp(model, g, target, cam);
        case Method::GnnExplainer: return gnn_explainer(model, g, target, mask).saliency;
        case Method::Lrp: return graph_lrp(model, g, target);
    }
    throw InvalidArgument("unknown explainer");
}

std::vector<std::int32_t> top_k_entities(const Saliency& s, const std::vector<std::int32_t>& ids, int k) {
    if (k < 1) throw InvalidArgument("top_k: k must be >= 1");
    if (ids.size() != s.scores.size()) throw InvalidArgument("top_k: one id per score required");
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (s.scores[a] != s.scores[b]) return s.scores[a] > s.scores[b];
        return ids[a] < ids[b];
    });
    order.resize(std::min(order.size(), static_cast<std::size_t>(k)));
    std::vector<std::int32_t> out;
    for (auto i : order) out.push_back(ids[i]);
    return out;
}

std::vector<std::int32_t> top_k_entities(const Saliency& s, const EntityTable& table, int k) {
    std::vector<std::int32_t> ids;
    for (const auto& e : table) ids.push_back(e.id);
    return top_k_entities(s, ids, k);
}

Image render_overlay(const Image& base, const graph::EntityGraph& g, const Saliency& s, int radius) {
    if (s.scores.size() != g.centroids.size()) throw InvalidArgument("overlay: one score per node required");
    Image out = base;
    double mx = 0.0;
    for (double v : s.scores) mx = std::max(mx, v);
    for (std::size_t i = 0; i < g.centroids.size(); ++i) {
        const double t = mx > 0.0 ? std::clamp(s.scores[i] / mx, 0.0, 1.0) : 0.0;
        const std::array<std::uint8_t, 3> color{static_cast<std::uint8_t>(std::lround(255 * t)), 0,
                                               static_cast<std::uint8_t>(std::lround(255 * (1 - t)))};
        const int cr = static_cast<int>(std::lround(g.centroids[i].row));
        const int cc = static_cast<int>(std::lround(g.centroids[i].col));
        for (int r = std::max(0, cr - radius); r <= std::min(out.height() - 1, cr + radius); ++r) {
            for (int c = std::max(0, cc - radius); c <= std::min(out.width() - 1, cc + radius); ++c) {
                if ((r - cr) * (r - cr) + (c - cc) * (c - cc) <= radius * radius) out.set(r, c, color);
            }
        }
    }
    return out;
}

std::string saliency_to_json(const Saliency& s) {
    return json{{"scores", s.scores}, {"class", s.target_class}, {"method", s.method}}.dump();
}

Saliency saliency_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        Saliency s;
        if (!j.contains("scores")) throw SchemaError("scores", "missing");
        if (!j.contains("class")) throw SchemaError("class", "missing");
        if (!j.contains("method")) throw SchemaError("method", "missing");
        s.scores = j["scores"].get<std::vector<double>>();
        s.target_class = j["class"].get<int>();
        s.method = j["method"].get<std::string>();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("saliency", e.what());
    }
}

}  // namespace histograph::explain
