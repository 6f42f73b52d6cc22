#include "histograph/pipeline.hpp"

#include <cstdlib>
#include <set>

#include <openssl/evp.h>

#include "histograph/image_io.hpp"
#include "histograph/ops.hpp"

namespace histograph::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256 failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

namespace {

std::vector<std::string> string_list(const json& step, const char* key, const std::string& name) {
    if (!step.contains(key)) return {};
    const auto& v = step[key];
    if (!v.is_array()) throw SchemaError("steps." + name + "." + key, "expected an array of strings");
    std::vector<std::string> out;
    for (const auto& s : v) {
        if (!s.is_string()) throw SchemaError("steps." + name + "." + key, "expected an array of strings");
        out.push_back(s.get<std::string>());
    }
    return out;
}

}  // namespace

PipelineConfig parse_pipeline(const std::string& text, const fs::path& base_dir) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError("pipeline", std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw SchemaError("pipeline", "expected an object");
    for (const auto& [key, value] : doc.items()) {
        if (key != "workspace" && key != "cache" && key != "inputs" && key != "steps") {
            throw SchemaError(key, "unknown pipeline key");
        }
    }
    const auto resolve = [&](const fs::path& p) { return p.is_absolute() ? p : base_dir / p; };

    PipelineConfig cfg;
    if (doc.contains("workspace")) {
        if (!doc["workspace"].is_string()) throw SchemaError("workspace", "expected a path");
        cfg.workspace = resolve(doc["workspace"].get<std::string>());
    } else {
        cfg.workspace = resolve(cfg.workspace);
    }
    if (const char* env = std::getenv("HISTOGRAPH_WORKSPACE"); env && *env) cfg.workspace = env;
    if (doc.contains("cache")) {
        if (!doc["cache"].is_boolean()) throw SchemaError("cache", "expected true or false");
        cfg.cache = doc["cache"].get<bool>();
    }
    if (doc.contains("inputs")) {
        if (!doc["inputs"].is_object()) throw SchemaError("inputs", "expected an object of key: path");
        for (const auto& [key, value] : doc["inputs"].items()) {
            if (!value.is_string()) throw SchemaError("inputs." + key, "expected a path");
            cfg.sources[key] = resolve(value.get<std::string>());
        }
    }

    std::set<std::string> keys;
    for (const auto& [key, path] : cfg.sources) keys.insert(key);
    std::set<std::string> names;
    if (doc.contains("steps")) {
        if (!doc["steps"].is_array()) throw SchemaError("steps", "expected an array");
        for (std::size_t i = 0; i < doc["steps"].size(); ++i) {
            const auto& s = doc["steps"][i];
            if (!s.is_object()) throw SchemaError("steps[" + std::to_string(i) + "]", "expected an object");
            StepConfig step;
            if (!s.contains("name") || !s["name"].is_string()) {
                throw SchemaError("steps[" + std::to_string(i) + "].name", "missing step name");
            }
            step.name = s["name"].get<std::string>();
            const std::string where = "steps." + step.name;
            for (const auto& [key, value] : s.items()) {
                if (key != "name" && key != "op" && key != "params" && key != "inputs" && key != "outputs") {
                    throw SchemaError(where + "." + key, "unknown step key");
                }
            }
            if (!names.insert(step.name).second) throw SchemaError(where + ".name", "duplicate step name");
            if (!s.contains("op") || !s["op"].is_string()) throw SchemaError(where + ".op", "missing op");
            step.op = s["op"].get<std::string>();
            const ops::OpSpec* spec = ops::find_op(step.op);
            if (!spec) throw SchemaError(where + ".op", "unknown op \"" + step.op + "\"");
            if (s.contains("params")) {
                if (!s["params"].is_object()) throw SchemaError(where + ".params", "expected an object");
                step.params = s["params"];
            }
            step.inputs = string_list(s, "inputs", step.name);
            step.outputs = string_list(s, "outputs", step.name);
            const int nin = static_cast<int>(step.inputs.size());
            if (nin < spec->min_inputs || nin > spec->max_inputs) {
                throw SchemaError(where + ".inputs", "op " + step.op + " takes " + std::to_string(spec->min_inputs) +
                                                         (spec->max_inputs != spec->min_inputs
                                                              ? "-" + std::to_string(spec->max_inputs)
                                                              : std::string()) +
                                                         " inputs");
            }
            if (static_cast<int>(step.outputs.size()) != spec->outputs) {
                throw SchemaError(where + ".outputs", "op " + step.op + " produces " + std::to_string(spec->outputs) + " output(s)");
            }
            for (const auto& in : step.inputs) {
                if (!keys.count(in)) throw SchemaError(where + ".inputs", "undeclared input \"" + in + "\"");
            }
            for (const auto& out : step.outputs) {
                if (!keys.insert(out).second) throw SchemaError(where + ".outputs", "key \"" + out + "\" already defined");
            }
            cfg.steps.push_back(std::move(step));
        }
    }
    return cfg;
}

PipelineConfig load_pipeline(const fs::path& path) {
    return parse_pipeline(read_file(path), path.has_parent_path() ? path.parent_path() : fs::path("."));
}

namespace {

json load_manifest(const fs::path& path) {
    if (!fs::exists(path)) return json::object();
    try {
        json j = json::parse(read_file(path));
        return j.is_object() ? j : json::object();
    } catch (const json::exception&) {
        return json::object();  // a corrupt manifest only costs a rerun
    }
}

void write_manifest(const fs::path& path, const json& manifest) {
    const fs::path tmp = path.string() + ".tmp";
    write_file(tmp, manifest.dump(2));
    fs::rename(tmp, path);
}

bool outputs_intact(const json& entry, const std::vector<std::string>& keys) {
    if (!entry.contains("outputs")) return false;
    const auto& outs = entry["outputs"];
    for (const auto& key : keys) {
        if (!outs.contains(key)) return false;
        const fs::path p = outs[key]["path"].get<std::string>();
        if (!fs::exists(p) || sha256_file(p) != outs[key]["sha256"].get<std::string>()) return false;
    }
    return true;
}

}  // namespace

RunReport run_pipeline(const PipelineConfig& cfg) {
    RunReport report;
    for (const auto& [key, path] : cfg.sources) {
        if (!fs::exists(path)) throw SchemaError("inputs." + key, "file not found: " + path.string());
        report.outputs[key] = path;
    }
    fs::create_directories(cfg.workspace);
    const fs::path manifest_path = cfg.workspace / "manifest.json";
    json manifest = load_manifest(manifest_path);

    for (const auto& step : cfg.steps) {
        const ops::OpSpec* spec = ops::find_op(step.op);
        if (!spec) throw StepError(step.name, "unknown op \"" + step.op + "\"");

        std::string fingerprint = step.op + "@" + spec->version + "\n" + step.params.dump() + "\n";
        for (const auto& in : step.inputs) {
            const auto it = report.outputs.find(in);
            if (it == report.outputs.end()) throw StepError(step.name, "input \"" + in + "\" is not available");
            fingerprint += in + "=" + sha256_file(it->second) + "\n";
        }
        const std::string key = sha256_hex(fingerprint);

        if (cfg.cache && manifest.contains(step.name)) {
            const json& entry = manifest[step.name];
            if (entry.value("key", "") == key && outputs_intact(entry, step.outputs)) {
                for (const auto& out : step.outputs) {
                    report.outputs[out] = entry["outputs"][out]["path"].get<std::string>();
                }
                report.cached.push_back(step.name);
                continue;
            }
        }

        const fs::path dir = cfg.workspace / step.name;
        std::vector<fs::path> written;
        try {
            std::vector<ops::Artifact> inputs;
            for (const auto& in : step.inputs) inputs.push_back(ops::load_artifact(report.outputs[in]));
            const auto results = spec->run(inputs, step.params);
            fs::create_directories(dir);
            json entry = {{"key", key}, {"op", step.op}, {"version", spec->version}, {"outputs", json::object()}};
            for (std::size_t i = 0; i < step.outputs.size(); ++i) {
                const fs::path path = dir / (step.outputs[i] + ops::extension_of(results[i]));
                written.push_back(path);
                ops::save_artifact(results[i], path);
                entry["outputs"][step.outputs[i]] = {{"path", path.string()}, {"sha256", sha256_file(path)}};
                report.outputs[step.outputs[i]] = path;
            }
            manifest[step.name] = entry;
            write_manifest(manifest_path, manifest);
        } catch (const std::exception& e) {
            std::error_code ec;
            for (const auto& p : written) fs::remove(p, ec);
            if (manifest.contains(step.name)) {
                manifest.erase(step.name);
                write_manifest(manifest_path, manifest);
            }
            throw StepError(step.name, e.what());
        }
        report.executed.push_back(step.name);
    }
    return report;
}

}  // namespace histograph::pipeline
