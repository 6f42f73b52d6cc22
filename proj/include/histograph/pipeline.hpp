#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "histograph/error.hpp"

namespace histograph::pipeline {

struct StepConfig {
    std::string name;
    std::string op;
    nlohmann::json params = nlohmann::json::object();
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
};

struct PipelineConfig {
    std::filesystem::path workspace = "workspace";
    bool cache = true;
    std::map<std::string, std::filesystem::path> sources;  // declared file inputs
    std::vector<StepConfig> steps;
};

/// Raised when a step fails; `step()` names it.
class StepError : public Error {
public:
    StepError(std::string step, const std::string& what)
        : Error("step \"" + step + "\": " + what), step_(std::move(step)) {}
    const std::string& step() const noexcept { return step_; }

private:
    std::string step_;
};

/// Parses and validates a pipeline document. Relative paths resolve against
/// `base_dir`; HISTOGRAPH_WORKSPACE, when set, replaces the workspace.
PipelineConfig parse_pipeline(const std::string& text, const std::filesystem::path& base_dir = ".");
PipelineConfig load_pipeline(const std::filesystem::path& path);

struct RunReport {
    std::map<std::string, std::filesystem::path> outputs;  // every key, sources included
    std::vector<std::string> executed;
    std::vector<std::string> cached;
};

/// Runs the steps in order, writing {workspace}/{step}/{key}{ext}. With the
/// cache on, a step whose op version, params and input contents match the
/// manifest, and whose recorded outputs still hash the same, is skipped.
RunReport run_pipeline(const PipelineConfig& cfg);

/// Lowercase hex SHA-256.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace histograph::pipeline
