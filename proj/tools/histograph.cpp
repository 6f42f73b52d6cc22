// histograph command-line front end.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "histograph/benchmark.hpp"
#include "histograph/explain.hpp"
#include "histograph/features.hpp"
#include "histograph/gnn.hpp"
#include "histograph/graph.hpp"
#include "histograph/image_io.hpp"
#include "histograph/ops.hpp"
#include "histograph/pipeline.hpp"
#include "histograph/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace histograph;

namespace {

json load_params(const std::string& path) {
    if (path.empty()) return json::object();
    try {
        json j = json::parse(read_file(path));
        if (!j.is_object()) throw SchemaError("params", "expected a JSON object");
        return j;
    } catch (const json::parse_error& e) {
        throw SchemaError("params", std::string("invalid JSON: ") + e.what());
    }
}

template <typename T>
void set_if(json& params, const char* key, const std::optional<T>& value) {
    if (value) params[key] = *value;
}

std::vector<ops::Artifact> run_op(const std::string& name, const std::vector<ops::Artifact>& inputs, const json& params) {
    return ops::find_op(name)->run(inputs, params);
}

struct Common {
    std::string in, out, params;
};

void add_common(CLI::App* cmd, Common& c, const std::string& in_help, const std::string& out_help) {
    cmd->add_option("--in", c.in, in_help)->required();
    cmd->add_option("--out", c.out, out_help)->required();
    cmd->add_option("--params", c.params, "JSON file with operation parameters");
}

std::vector<std::pair<gnn::Sample, std::unique_ptr<graph::EntityGraph>>> load_dataset(const std::string& csv_path) {
    const std::string text = read_file(csv_path);
    const fs::path base = fs::path(csv_path).parent_path();
    std::istringstream lines(text);
    std::string line;
    std::vector<std::pair<gnn::Sample, std::unique_ptr<graph::EntityGraph>>> out;
    bool header = true;
    while (std::getline(lines, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header) {
            header = false;
            if (line.rfind("graph_path", 0) == 0) continue;
        }
        const auto comma = line.rfind(',');
        if (comma == std::string::npos) throw SchemaError("labels", "expected graph_path,label rows");
        fs::path p = line.substr(0, comma);
        if (p.is_relative()) p = base / p;
        auto g = std::make_unique<graph::EntityGraph>(graph::read_graph(p));
        gnn::Sample s{g.get(), std::stoi(line.substr(comma + 1))};
        out.emplace_back(s, std::move(g));
    }
    if (out.empty()) throw SchemaError("labels", "no samples listed");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"histograph: histology images to entity graphs, GNNs and saliency"};
    app.require_subcommand(1);

    // normalize
    Common norm;
    std::optional<std::string> norm_method, norm_reference;
    std::string profile_out;
    auto* normalize = app.add_subcommand("normalize", "H&E stain normalization");
    add_common(normalize, norm, "input PPM", "normalized PPM");
    normalize->add_option("--method", norm_method, "macenko|vahadane");
    normalize->add_option("--reference", norm_reference, "reference stain profile JSON");
    normalize->add_option("--profile-out", profile_out, "write the source stain profile JSON");

    // tissue-mask
    Common tissue;
    auto* tissue_cmd = app.add_subcommand("tissue-mask", "tissue vs background mask (0/255 PGM)");
    add_common(tissue_cmd, tissue, "input PPM", "mask PGM");

    // nuclei
    Common nuc;
    std::string nuc_entities, nuc_mask;
    auto* nuclei_cmd = app.add_subcommand("nuclei", "classical nuclei instance detection");
    add_common(nuclei_cmd, nuc, "input PPM", "label map JSON");
    nuclei_cmd->add_option("--entities", nuc_entities, "entity table CSV");
    nuclei_cmd->add_option("--mask", nuc_mask, "tissue mask PGM restricting detection");

    // superpixel
    Common sp;
    std::optional<int> sp_k;
    std::optional<double> sp_merge;
    auto* sp_cmd = app.add_subcommand("superpixel", "SLIC superpixels with optional color merging");
    add_common(sp_cmd, sp, "input PPM", "label map JSON");
    sp_cmd->add_option("--k", sp_k, "target superpixel count");
    sp_cmd->add_option("--merge-threshold", sp_merge, "CIELAB merge threshold");

    // features
    Common feat;
    std::string feat_labels, feat_external;
    bool feat_minmax = false;
    auto* feat_cmd = app.add_subcommand("features", "per-entity handcrafted features");
    add_common(feat_cmd, feat, "input PPM", "feature CSV");
    feat_cmd->add_option("--labels", feat_labels, "label map JSON")->required();
    feat_cmd->add_option("--external", feat_external, "append features from an id-keyed CSV");
    feat_cmd->add_flag("--min-max", feat_minmax, "rescale every column to [0, 1]");

    // build-graph
    Common bg;
    std::string bg_mode = "knn", bg_features;
    std::optional<int> bg_k;
    std::optional<double> bg_threshold;
    auto* bg_cmd = app.add_subcommand("build-graph", "kNN or region-adjacency entity graph");
    add_common(bg_cmd, bg, "label map JSON", "graph JSON");
    bg_cmd->add_option("--mode", bg_mode, "knn|rag")->check(CLI::IsMember({"knn", "rag"}));
    bg_cmd->add_option("--features", bg_features, "feature CSV")->required();
    bg_cmd->add_option("--k", bg_k, "neighbours per node");
    bg_cmd->add_option("--threshold", bg_threshold, "max edge length in pixels (0 = none)");

    // train
    Common tr;
    auto* train_cmd = app.add_subcommand("train", "train a GIN/PNA graph classifier");
    add_common(train_cmd, tr, "CSV of graph_path,label", "model checkpoint JSON");

    // predict
    Common pr;
    std::string pr_model;
    auto* predict_cmd = app.add_subcommand("predict", "classify a graph");
    add_common(predict_cmd, pr, "graph JSON", "prediction JSON");
    predict_cmd->add_option("--model", pr_model, "model checkpoint JSON")->required();

    // explain
    Common ex;
    std::string ex_model, ex_method = "gradcam", ex_overlay, ex_image;
    std::optional<int> ex_class, ex_topk;
    auto* explain_cmd = app.add_subcommand("explain", "node saliency for a prediction");
    add_common(explain_cmd, ex, "graph JSON", "saliency JSON");
    explain_cmd->add_option("--graph", ex.in, "alias of --in");
    explain_cmd->add_option("--model", ex_model, "model checkpoint JSON")->required();
    explain_cmd->add_option("--method", ex_method, "gradcam|gradcampp|gnnexplainer|lrp");
    explain_cmd->add_option("--class", ex_class, "class to explain (default: predicted)");
    explain_cmd->add_option("--overlay", ex_overlay, "render saliency disks onto --image");
    explain_cmd->add_option("--image", ex_image, "base PPM for --overlay");
    explain_cmd->add_option("--top-k", ex_topk, "print the ids of the k most salient entities");
    explain_cmd->get_option("--in")->required(false);

    // pipeline run
    auto* pipeline_cmd = app.add_subcommand("pipeline", "declarative pipelines");
    pipeline_cmd->require_subcommand(1);
    std::string pipe_file;
    auto* pipe_run = pipeline_cmd->add_subcommand("run", "run a pipeline JSON");
    pipe_run->add_option("file", pipe_file, "pipeline JSON")->required();

    // benchmark
    std::vector<int> bench_sides{512, 1024};
    std::vector<std::string> bench_ops;
    int bench_reps = 3;
    std::uint64_t bench_seed = 0;
    std::string bench_out;
    auto* bench_cmd = app.add_subcommand("benchmark", "runtime of core operations on synthetic tissue");
    bench_cmd->add_option("--sizes", bench_sides, "side lengths in pixels")->delimiter(',');
    bench_cmd->add_option("--ops", bench_ops, "ops to time (default: all)")->delimiter(',');
    bench_cmd->add_option("--reps", bench_reps, "repetitions per op (median reported)");
    bench_cmd->add_option("--seed", bench_seed, "synthetic image seed");
    bench_cmd->add_option("--out", bench_out, "CSV path (default: stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*normalize) {
            json params = load_params(norm.params);
            set_if(params, "method", norm_method);
            set_if(params, "reference", norm_reference);
            const Image img = read_ppm(norm.in);
            ops::save_artifact(run_op("normalize", {img}, params)[0], norm.out);
            if (!profile_out.empty()) {
                ops::ParamReader p(params, "");
                const auto method = stain::parse_method(p.get<std::string>("method", "macenko"));
                const auto sp_params = ops::read_stain_params(p);
                write_file(profile_out, stain::profile_to_json(stain::estimate_profile(img, method, sp_params)));
            }
        } else if (*tissue_cmd) {
            ops::save_artifact(run_op("tissue_mask", {read_ppm(tissue.in)}, load_params(tissue.params))[0], tissue.out);
        } else if (*nuclei_cmd) {
            std::vector<ops::Artifact> inputs{read_ppm(nuc.in)};
            if (!nuc_mask.empty()) inputs.push_back(ops::load_artifact(nuc_mask));
            const auto out = run_op("nuclei", inputs, load_params(nuc.params));
            ops::save_artifact(out[0], nuc.out);
            if (!nuc_entities.empty()) write_entity_csv(entity_table(std::get<LabelMap>(out[0])), nuc_entities);
        } else if (*sp_cmd) {
            json params = load_params(sp.params);
            set_if(params, "k", sp_k);
            set_if(params, "merge_threshold", sp_merge);
            ops::save_artifact(run_op("superpixel", {read_ppm(sp.in)}, params)[0], sp.out);
        } else if (*feat_cmd) {
            json params = load_params(feat.params);
            if (feat_minmax) params["min_max"] = true;
            const LabelMap labels = read_label_map(feat_labels);
            auto fm = std::get<features::FeatureMatrix>(run_op("features", {read_ppm(feat.in), labels}, params)[0]);
            if (!feat_external.empty()) {
                fm = features::assemble_features({fm, features::load_external_features(feat_external, entity_table(labels))});
            }
            features::write_feature_csv(fm, feat.out);
        } else if (*bg_cmd) {
            json params = load_params(bg.params);
            set_if(params, "k", bg_k);
            set_if(params, "threshold", bg_threshold);
            const std::vector<ops::Artifact> inputs{read_label_map(bg.in), features::read_feature_csv(bg_features)};
            ops::save_artifact(run_op(bg_mode == "knn" ? "knn_graph" : "rag_graph", inputs, params)[0], bg.out);
        } else if (*train_cmd) {
            const json params = load_params(tr.params);
            auto data = load_dataset(tr.in);
            std::vector<gnn::Sample> samples;
            for (const auto& [s, g] : data) samples.push_back(s);
            const json mj = params.value("model", json::object());
            const json tj = params.value("train", json::object());
            ops::ParamReader mp(mj, "model.");
            gnn::GnnConfig cfg;
            cfg.layer = gnn::parse_layer_type(mp.get<std::string>("layer", "gin"));
            cfg.num_layers = mp.get("num_layers", cfg.num_layers);
            cfg.hidden = mp.get("hidden", cfg.hidden);
            cfg.mlp_depth = mp.get("mlp_depth", cfg.mlp_depth);
            cfg.head_hidden = mp.get("head_hidden", cfg.head_hidden);
            cfg.head_depth = mp.get("head_depth", cfg.head_depth);
            cfg.readout = gnn::parse_readout(mp.get<std::string>("readout", "mean"));
            cfg.num_classes = mp.get("num_classes", cfg.num_classes);
            cfg.gin_eps = mp.get("gin_eps", cfg.gin_eps);
            cfg.pna_delta = mp.get("pna_delta", cfg.pna_delta);
            mp.done();
            cfg.input_dim = samples.front().graph->feature_dim();
            ops::ParamReader tp(tj, "train.");
            gnn::TrainConfig tc;
            tc.lr = tp.get("lr", tc.lr);
            tc.epochs = tp.get("epochs", tc.epochs);
            tc.batch_size = tp.get("batch_size", tc.batch_size);
            tc.seed = tp.get("seed", tc.seed);
            tc.beta1 = tp.get("beta1", tc.beta1);
            tc.beta2 = tp.get("beta2", tc.beta2);
            tc.adam_eps = tp.get("adam_eps", tc.adam_eps);
            tp.done();
            for (const auto& [key, v] : params.items()) {
                if (key != "model" && key != "train") throw SchemaError(key, "unknown parameter");
            }
            gnn::GnnModel model = gnn::init_model(cfg, tc.seed);
            const auto result = gnn::train(model, samples, tc);
            gnn::write_model(model, tr.out);
            std::cout << "epochs " << result.loss.size() << ", final loss " << result.loss.back()
                      << ", train accuracy " << gnn::accuracy(model, samples) << "\n";
        } else if (*predict_cmd) {
            const auto model = gnn::read_model(pr_model);
            const auto p = gnn::predict(model, graph::read_graph(pr.in));
            json j{{"class", p.label}, {"probabilities", std::vector<double>(p.probabilities.data(), p.probabilities.data() + p.probabilities.size())}};
            write_file(pr.out, j.dump() + "\n");
        } else if (*explain_cmd) {
            json params = load_params(ex.params);
            params["method"] = ex_method;
            set_if(params, "class", ex_class);
            const auto g = graph::read_graph(ex.in);
            const auto out = run_op("explain", {g, ops::ModelFile{read_file(ex_model)}}, params);
            const auto& s = std::get<explain::Saliency>(out[0]);
            ops::save_artifact(out[0], ex.out);
            if (!ex_overlay.empty()) {
                if (ex_image.empty()) throw InvalidArgument("--overlay needs --image");
                write_ppm(explain::render_overlay(read_ppm(ex_image), g, s), ex_overlay);
            }
            if (ex_topk) {
                for (auto id : explain::top_k_entities(s, g.node_features.ids, *ex_topk)) std::cout << id << "\n";
            }
        } else if (*pipe_run) {
            const auto report = pipeline::run_pipeline(pipeline::load_pipeline(pipe_file));
            std::cout << "executed " << report.executed.size() << ", cached " << report.cached.size() << "\n";
            for (const auto& [key, path] : report.outputs) std::cout << key << "\t" << path.string() << "\n";
        } else if (*bench_cmd) {
            const auto rows = bench::run_benchmark(bench_sides, bench::select_ops(bench_ops), bench_reps, bench_seed);
            const std::string csv = bench::benchmark_csv(rows);
            if (bench_out.empty()) std::cout << csv;
            else write_file(bench_out, csv);
        }
    } catch (const std::exception& e) {
        std::cerr << "histograph: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
