// Command-line front end: convert, perturb, generate, run, baseline, eval.
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "anonpsy/config.hpp"
#include "anonpsy/pipeline.hpp"

namespace fs = std::filesystem;
using namespace anonpsy;

namespace {

struct GlobalFlags {
    std::string config;
    std::optional<int> jobs;
    std::optional<std::int64_t> seed;
    std::string backend;
};

Config resolve_config(const GlobalFlags& flags) {
    Config cfg;
    if (!flags.config.empty()) {
        if (!fs::exists(flags.config)) throw UsageError("config file not found: " + flags.config);
        cfg = load_config(flags.config);
    } else {
        cfg.base_dir = fs::current_path();
    }
    apply_env_overrides(cfg);
    if (flags.jobs) {
        if (*flags.jobs < 1) throw UsageError("--jobs must be at least 1");
        cfg.jobs = *flags.jobs;
    }
    if (flags.seed) {
        cfg.seed = *flags.seed;
        cfg.perturb.seed = *flags.seed;
    }
    if (flags.backend == "mock") cfg.gateway.backend = BackendKind::mock;
    if (flags.backend == "live") cfg.gateway.backend = BackendKind::live;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"anonpsy: graph-based de-identification of clinical case narratives"};
    app.require_subcommand(1);
    GlobalFlags flags;
    app.add_option("--config", flags.config, "YAML config file");
    app.add_option("--jobs", flags.jobs, "Cases processed in parallel");
    app.add_option("--seed", flags.seed, "Global seed (overrides the config)");
    app.add_option("--backend", flags.backend, "LLM backend")->check(CLI::IsMember({"live", "mock"}));

    std::string corpus, out, baseline;
    auto* convert = app.add_subcommand("convert", "Narratives to semantic graphs");
    convert->add_option("corpus", corpus, "Corpus directory with manifest.yaml")->required();
    convert->add_option("out", out, "Run directory")->required();
    auto* perturb = app.add_subcommand("perturb", "Perturb converted graphs");
    perturb->add_option("out", out, "Run directory")->required();
    auto* generate = app.add_subcommand("generate", "Narrate perturbed graphs");
    generate->add_option("out", out, "Run directory")->required();
    auto* run = app.add_subcommand("run", "convert, perturb and generate");
    run->add_option("corpus", corpus, "Corpus directory with manifest.yaml")->required();
    run->add_option("out", out, "Run directory")->required();
    auto* base = app.add_subcommand("baseline", "Baseline rewrite of the corpus");
    base->add_option("name", baseline, "phi, sdc or llm_only")->required()->check(CLI::IsMember({"phi", "sdc", "llm_only"}));
    base->add_option("corpus", corpus, "Corpus directory with manifest.yaml")->required();
    base->add_option("out", out, "Run directory")->required();
    auto* eval = app.add_subcommand("eval", "Privacy and utility report for a run directory");
    eval->add_option("out", out, "Run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        Runtime rt = make_runtime(resolve_config(flags));
        if (convert->parsed()) return cmd_convert(corpus, out, rt);
        if (perturb->parsed()) return cmd_perturb(out, rt);
        if (generate->parsed()) return cmd_generate(out, rt);
        if (run->parsed()) return cmd_run(corpus, out, rt);
        if (base->parsed()) return cmd_baseline(baseline, corpus, out, rt);
        if (eval->parsed()) return cmd_eval(out, rt);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitCaseFailures;
    }
    return kExitUsage;
}
