#include "histograph/ops.hpp"

#include <algorithm>
#include <map>

#include "histograph/gnn.hpp"
#include "histograph/image_io.hpp"

namespace histograph::ops {

ParamReader::ParamReader(const json& params, std::string context) : params_(params), context_(std::move(context)) {
    if (!params_.is_null() && !params_.is_object()) throw SchemaError(context_ + "params", "expected an object");
}

void ParamReader::done() const {
    if (!params_.is_object()) return;
    for (const auto& [key, value] : params_.items()) {
        if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
            throw SchemaError(context_ + key, "unknown parameter");
        }
    }
}

stain::StainParams read_stain_params(ParamReader& p) {
    stain::StainParams s;
    s.beta = p.get("beta", s.beta);
    s.alpha = p.get("alpha", s.alpha);
    s.lambda = p.get("lambda", s.lambda);
    s.iters = p.get("iters", s.iters);
    s.tolerance = p.get("tolerance", s.tolerance);
    return s;
}

tissue::TissueMaskParams read_tissue_params(ParamReader& p) {
    tissue::TissueMaskParams t;
    t.sigma = p.get("sigma", t.sigma);
    t.growth = p.get("growth", t.growth);
    t.stop_threshold = p.get("stop_threshold", t.stop_threshold);
    t.max_iters = p.get("max_iters", t.max_iters);
    t.validate();
    return t;
}

nuclei::NucleiParams read_nuclei_params(ParamReader& p) {
    nuclei::NucleiParams n;
    n.min_area = p.get("min_area", n.min_area);
    n.max_area = p.get("max_area", n.max_area);
    n.sigma = p.get("sigma", n.sigma);
    n.peak_distance = p.get("peak_distance", n.peak_distance);
    n.validate();
    return n;
}

superpixel::SlicParams read_slic_params(ParamReader& p) {
    superpixel::SlicParams s;
    s.k = p.get("k", s.k);
    s.compactness = p.get("compactness", s.compactness);
    s.max_iters = p.get("max_iters", s.max_iters);
    s.min_size_fraction = p.get("min_size_fraction", s.min_size_fraction);
    s.validate();
    return s;
}

std::optional<superpixel::MergeParams> read_merge_params(ParamReader& p) {
    const auto threshold = p.optional<double>("merge_threshold");
    const auto min_regions = p.get("min_regions", 1);
    if (!threshold) return std::nullopt;
    superpixel::MergeParams m{*threshold, min_regions};
    m.validate();
    return m;
}

features::GlcmParams read_glcm_params(ParamReader& p) {
    features::GlcmParams g;
    g.levels = p.get("levels", g.levels);
    g.validate();
    return g;
}

graph::KnnParams read_knn_params(ParamReader& p) {
    graph::KnnParams k;
    k.k = p.get("k", k.k);
    k.threshold = p.get("threshold", *k.threshold);
    if (*k.threshold <= 0.0) k.threshold.reset();  // 0 disables pruning
    k.validate();
    return k;
}

explain::MaskParams read_mask_params(ParamReader& p) {
    explain::MaskParams m;
    m.steps = p.get("steps", m.steps);
    m.lr = p.get("lr", m.lr);
    m.lambda_sparsity = p.get("lambda_sparsity", m.lambda_sparsity);
    m.lambda_entropy = p.get("lambda_entropy", m.lambda_entropy);
    m.seed = p.get("seed", m.seed);
    return m;
}

std::string kind_of(const Artifact& a) {
    static const char* names[] = {"image", "mask", "labels", "entities", "features", "graph", "saliency", "model"};
    return names[a.index()];
}

std::string extension_of(const Artifact& a) {
    static const char* ext[] = {".ppm", ".pgm", ".json", ".csv", ".csv", ".json", ".json", ".json"};
    return ext[a.index()];
}

void save_artifact(const Artifact& a, const std::filesystem::path& path) {
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Image>) write_ppm(v, path);
            else if constexpr (std::is_same_v<T, Mask>) write_pgm(mask_to_gray(v.labels), path);
            else if constexpr (std::is_same_v<T, LabelMap>) write_label_map(v, path);
            else if constexpr (std::is_same_v<T, EntityTable>) write_entity_csv(v, path);
            else if constexpr (std::is_same_v<T, features::FeatureMatrix>) features::write_feature_csv(v, path);
            else if constexpr (std::is_same_v<T, graph::EntityGraph>) graph::write_graph(v, path);
            else if constexpr (std::is_same_v<T, explain::Saliency>) write_file(path, explain::saliency_to_json(v));
            else write_file(path, v.text);
        },
        a);
}

Artifact load_artifact(const std::filesystem::path& path) {
    const std::string ext = path.extension().string();
    if (ext == ".ppm") return read_ppm(path);
    if (ext == ".pgm") {
        const GrayImage g = read_pgm(path);
        LabelMap m(g.height(), g.width());
        for (std::size_t i = 0; i < g.pixel_count(); ++i) m.labels()[i] = g.data()[i] > 0 ? 1 : 0;
        return Mask{std::move(m)};
    }
    if (ext == ".csv") {
        const std::string text = read_file(path);
        if (text.rfind("id,centroid_row", 0) == 0) return read_entity_csv(path);
        return features::read_feature_csv(path);
    }
    if (ext == ".json") {
        const std::string text = read_file(path);
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            throw SchemaError(path.string(), std::string("invalid JSON: ") + e.what());
        }
        if (j.contains("labels")) return label_map_from_json(text);
        if (j.contains("num_nodes")) return graph::graph_from_json(text);
        if (j.contains("scores")) return explain::saliency_from_json(text);
        if (j.contains("config") || j.contains("kind")) return ModelFile{text};
        throw SchemaError(path.string(), "unrecognized JSON artifact");
    }
    throw InvalidArgument("unsupported artifact extension \"" + ext + "\" for " + path.string());
}

namespace {

template <typename T>
const T& input(const std::vector<Artifact>& in, std::size_t i, const char* what) {
    const T* v = std::get_if<T>(&in.at(i));
    if (!v) throw InvalidArgument("input " + std::to_string(i + 1) + " must be " + what + ", got " + kind_of(in[i]));
    return *v;
}

std::vector<Artifact> op_normalize(const std::vector<Artifact>& in, const json& params) {
    ParamReader p(params, "");
    const auto method = stain::parse_method(p.get<std::string>("method", "macenko"));
    const auto sp = read_stain_params(p);
    const auto reference = p.optional<std::string>("reference");
    p.done();
    std::optional<stain::StainProfile> profile;
    if (reference) profile = stain::profile_from_json(read_file(*reference));
    return {stain::normalize(input<Image>(in, 0, "an image"), method, profile, sp)};
}

std::vector<Artifact> op_tissue_mask(const std::vector<Artifact>& in, const json& params) {
    ParamReader p(params, "");
    const auto tp = read_tissue_params(p);
    p.done();
    return {Mask{tissue::detect_tissue(input<Image>(in, 0, "an image"), tp).mask}};
}

std::vector<Artifact> op_nuclei(const std::vector<Artifact>& in, const json& params) {
    ParamReader p(params, "");
    const auto np = read_nuclei_params(p);
    p.done();
    const LabelMap* mask = in.size() > 1 ? &input<Mask>(in, 1, "a tissue mask").labels : nullptr;
    return {nuclei::detect_nuclei(input<Image>(in, 0, "an image"), np, mask).labels};
}

std::vector<Artifact> op_superpixel(const std::vector<Artifact>& in, const json& params) {
    ParamReader p(params, "");
    const auto sp = read_slic_params(p);
    const auto mp = read_merge_params(p);
    p.done();
    const Image& img = input<Image>(in, 0, "an image");
    LabelMap labels = superpixel::slic(img, sp);
    if (mp) labels = superpixel::merge_superpixels(img, labels, *mp);
    return {std::move(labels)};
}

std::vector<Artifact> op_features(const std::vector<Artifact>& in, const json& params) {
    ParamReader p(params, "");
    const auto gp = read_glcm_params(p);
    const int k = p.get("crowd_k", 5);
    const bool min_max = p.get("min_max", false);
    p.done();
    return {features::extract_all(input<Image>(in, 0, "an image"), input<LabelMap>(in, 1, "a label map"), gp, k, min_max)};
}

std::vector<Artifact> op_knn_graph(const std::vector<Artifact>& in, const json& params) {
    ParamReader p(params, "");
    const auto kp = read_knn_params(p);
    p.done();
    const LabelMap& labels = input<LabelMap>(in, 0, "a label map");
    return {graph::build_knn_graph(entity_table(labels), input<features::FeatureMatrix>(in, 1, "a feature matrix"), kp)};
}

std::vector<Artifact> op_rag_graph(const std::vector<Artifact>& in, const json& params) {
    ParamReader p(params, "");
    p.done();
    const LabelMap& labels = input<LabelMap>(in, 0, "a label map");
    return {graph::build_rag(labels, input<features::FeatureMatrix>(in, 1, "a feature matrix"), entity_table(labels))};
}

std::vector<Artifact> op_explain(const std::vector<Artifact>& in, const json& params) {
    ParamReader p(params, "");
    const auto method = explain::parse_method(p.get<std::string>("method", "gradcam"));
    const auto target = p.optional<int>("class");
    const auto mp = read_mask_params(p);
    explain::CamParams cp;
    cp.layer = p.get("layer", cp.layer);
    p.done();
    const auto& g = input<graph::EntityGraph>(in, 0, "a graph");
    const auto model = gnn::model_from_json(input<ModelFile>(in, 1, "a model checkpoint").text);
    const int c = target ? *target : gnn::predict(model, g).label;
    return {explain::run(method, model, g, c, mp, cp)};
}

const std::map<std::string, OpSpec>& registry() {
    static const std::map<std::string, OpSpec> ops = [] {
        std::map<std::string, OpSpec> m;
        const auto add = [&](OpSpec s) { m.emplace(s.name, std::move(s)); };
        add({"normalize", "1", 1, 1, 1, op_normalize});
        add({"tissue_mask", "1", 1, 1, 1, op_tissue_mask});
        add({"nuclei", "1", 1, 2, 1, op_nuclei});
        add({"superpixel", "1", 1, 1, 1, op_superpixel});
        add({"features", "1", 2, 2, 1, op_features});
        add({"knn_graph", "1", 2, 2, 1, op_knn_graph});
        add({"rag_graph", "1", 2, 2, 1, op_rag_graph});
        add({"explain", "1", 2, 2, 1, op_explain});
        return m;
    }();
    return ops;
}

}  // namespace

const OpSpec* find_op(const std::string& name) {
    const auto& r = registry();
    const auto it = r.find(name);
    return it == r.end() ? nullptr : &it->second;
}

std::vector<std::string> op_names() {
    std::vector<std::string> names;
    for (const auto& [name, spec] : registry()) names.push_back(name);
    return names;
}

}  // namespace histograph::ops
