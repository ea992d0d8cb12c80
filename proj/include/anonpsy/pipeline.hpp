#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "anonpsy/config.hpp"
#include "anonpsy/converter.hpp"
#include "anonpsy/gateway.hpp"
#include "anonpsy/similarity.hpp"

namespace anonpsy {

/// Exit statuses of the commands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCaseFailures = 1;
inline constexpr int kExitUsage = 2;

struct CorpusCase {
    std::string case_id;
    std::filesystem::path file;
    std::vector<std::string> diagnoses;
};

/// Reads `<corpus_dir>/manifest.yaml`: `cases: [{case_id, file?, diagnoses}]`; file defaults to `<case_id>.txt`.
std::vector<CorpusCase> load_corpus(const std::filesystem::path& corpus_dir);
CaseNarrative read_case(const CorpusCase& c);

/// Backend, gateways and embedder built from a config.
struct Runtime {
    Config cfg;
    std::shared_ptr<ChatBackend> backend;
    std::unique_ptr<Gateway> gateway;
    std::unique_ptr<Gateway> judge;  // judge and diagnosis-prediction model
    std::unique_ptr<Embedder> embedder;
};

Runtime make_runtime(const Config& cfg);
/// Same as above with an explicit backend (tests inject a MockBackend).
Runtime make_runtime(const Config& cfg, std::shared_ptr<ChatBackend> backend);

/// Runs fn(0..n-1) on up to `jobs` threads.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

int cmd_convert(const std::filesystem::path& corpus_dir, const std::filesystem::path& out_dir, Runtime& rt);
int cmd_perturb(const std::filesystem::path& out_dir, Runtime& rt);
int cmd_generate(const std::filesystem::path& out_dir, Runtime& rt);
int cmd_run(const std::filesystem::path& corpus_dir, const std::filesystem::path& out_dir, Runtime& rt);
/// name is one of phi, sdc, llm_only.
int cmd_baseline(const std::string& name, const std::filesystem::path& corpus_dir,
                 const std::filesystem::path& out_dir, Runtime& rt);
int cmd_eval(const std::filesystem::path& out_dir, Runtime& rt);

}  // namespace anonpsy
