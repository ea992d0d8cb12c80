#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "anonpsy/converter.hpp"
#include "anonpsy/gateway.hpp"
#include "anonpsy/narrator.hpp"
#include "anonpsy/perturber.hpp"
#include "anonpsy/yaml.hpp"

namespace anonpsy {

/// Missing or malformed command-line input, config or corpus.
class UsageError : public Error {
public:
    using Error::Error;
};

struct GatewayConfig {
    BackendKind backend = BackendKind::live;
    std::string endpoint = "http://localhost:11434/api/chat";
    std::string model = "gpt-oss:120b";
    std::filesystem::path mock_dir;   // fixture tree for the mock backend
    std::filesystem::path cache_dir;  // empty disables the response cache
    int timeout_s = 300;
    RetryPolicy retry;
};

struct EmbeddingConfig {
    std::string backend = "hashed";  // "hashed" or "http"
    std::string endpoint = "http://localhost:11434/api/embeddings";
    std::string model = "all-mpnet-base-v2";
    std::int64_t max_chars = 8000;
};

struct BaselineConfig {
    double sdc_temperature = 0.7;
    std::string ner = "heuristic";  // "heuristic" or "none"
};

struct EvalConfig {
    double theta = 0.8;
    bool predict_diagnoses = true;
    double predict_temperature = 0.0;
    bool judge = false;
    std::string judge_model = "gpt-5";
    double judge_temperature = 0.0;
    std::string judge_candidate = "llm_only";
};

struct Config {
    std::int64_t seed = 0;
    int jobs = 1;
    std::filesystem::path data_dir = ANONPSY_DATA_DIR;
    GatewayConfig gateway;
    EmbeddingConfig embedding;
    ConvertOptions convert;
    PerturbConfig perturb;
    NarratorOptions generate;
    BaselineConfig baselines;
    EvalConfig eval;
    /// Directory of the config file; relative paths resolve against it.
    std::filesystem::path base_dir;

    /// Resolved settings with paths shown relative to `base`.
    yaml::Tree to_tree(const std::filesystem::path& base = {}) const;
    /// SHA-256 of the resolved settings, paths relative to base_dir.
    std::string digest() const;
};

/// Reads a config file. Relative paths resolve against the file's directory. Unknown keys are errors.
Config load_config(const std::filesystem::path& path);
Config config_from_tree(const yaml::Tree& doc, const std::filesystem::path& base, const std::string& origin);

/// ANONPSY_ENDPOINT and ANONPSY_MODEL override the gateway endpoint and model.
void apply_env_overrides(Config& cfg);

}  // namespace anonpsy
