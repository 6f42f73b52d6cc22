#pragma once

// Named operations over typed artifacts, shared by the pipeline runner and
// the command-line tool. Parameters arrive as JSON objects; unknown keys are
// rejected so a typo never silently falls back to a default.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "histograph/error.hpp"
#include "histograph/explain.hpp"
#include "histograph/features.hpp"
#include "histograph/graph.hpp"
#include "histograph/image.hpp"
#include "histograph/nuclei.hpp"
#include "histograph/stain.hpp"
#include "histograph/superpixel.hpp"
#include "histograph/tissue_mask.hpp"

namespace histograph::ops {

using json = nlohmann::json;

/// Typed access to a parameter object. `context` prefixes error keys.
class ParamReader {
public:
    ParamReader(const json& params, std::string context);

    template <typename T>
    T get(const std::string& key, T fallback) {
        seen_.push_back(key);
        if (!params_.contains(key) || params_[key].is_null()) return fallback;
        try {
            return params_[key].get<T>();
        } catch (const json::exception&) {
            throw SchemaError(context_ + key, "wrong type");
        }
    }

    template <typename T>
    std::optional<T> optional(const std::string& key) {
        seen_.push_back(key);
        if (!params_.contains(key) || params_[key].is_null()) return std::nullopt;
        try {
            return params_[key].get<T>();
        } catch (const json::exception&) {
            throw SchemaError(context_ + key, "wrong type");
        }
    }

    /// Throws SchemaError for the first key nobody asked for.
    void done() const;

private:
    const json& params_;
    std::string context_;
    std::vector<std::string> seen_;
};

stain::StainParams read_stain_params(ParamReader& p);
tissue::TissueMaskParams read_tissue_params(ParamReader& p);
nuclei::NucleiParams read_nuclei_params(ParamReader& p);
superpixel::SlicParams read_slic_params(ParamReader& p);
std::optional<superpixel::MergeParams> read_merge_params(ParamReader& p);
features::GlcmParams read_glcm_params(ParamReader& p);
graph::KnnParams read_knn_params(ParamReader& p);
explain::MaskParams read_mask_params(ParamReader& p);

/// Binary LabelMap (1 = foreground), stored as a 0/255 PGM.
struct Mask {
    LabelMap labels;
    friend bool operator==(const Mask&, const Mask&) = default;
};

/// A model checkpoint kept as its JSON text.
struct ModelFile {
    std::string text;
};

using Artifact = std::variant<Image, Mask, LabelMap, EntityTable, features::FeatureMatrix, graph::EntityGraph,
                              explain::Saliency, ModelFile>;

std::string kind_of(const Artifact& a);
/// ".ppm", ".pgm", ".json" or ".csv".
std::string extension_of(const Artifact& a);
void save_artifact(const Artifact& a, const std::filesystem::path& path);
/// Type inferred from the extension and, for JSON/CSV, the content.
Artifact load_artifact(const std::filesystem::path& path);

struct OpSpec {
    std::string name;
    std::string version;  // bump when the op's output changes
    int min_inputs = 1;
    int max_inputs = 1;
    int outputs = 1;
    std::function<std::vector<Artifact>(const std::vector<Artifact>&, const json&)> run;
};

const OpSpec* find_op(const std::string& name);
std::vector<std::string> op_names();

}  // namespace histograph::ops
