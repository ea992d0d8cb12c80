#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "anonpsy/gateway.hpp"
#include "anonpsy/graph.hpp"
#include "anonpsy/relations.hpp"

namespace anonpsy {

struct CaseNarrative {
    std::string case_id;
    std::string text;
    std::vector<std::string> ground_truth_diagnoses;
};

/// Graph under construction: nodes and attributes without durations, plus raw episodes per node.
struct DraftGraph {
    SemanticGraph graph;
    std::map<std::string, std::vector<RawEpisode>> episodes;
    /// current_symptom as first stated by the model; recomputation overwrites it.
    std::map<std::string, bool> initial_current;
};

struct ConvertLog {
    std::vector<std::string> stages;
    std::vector<std::string> warnings;
    std::vector<std::string> flags;
    CausalPassLog causal;

    std::string render() const;
};

struct ConvertOptions {
    double temperature = 0.1;
    int max_attempts = 3;
};

/// Receives (stage name, YAML text) after each stage.
using StageSink = std::function<void(const std::string&, const std::string&)>;

DraftGraph extract_entities(const CaseNarrative& x, Gateway& gw, const ConvertOptions& opt, ConvertLog& log);

/// Fills `draft.episodes`. Nodes without a usable episode get an inferred ongoing episode at day 0.
void extract_episodes(const CaseNarrative& x, DraftGraph& draft, Gateway& gw, const ConvertOptions& opt,
                      ConvertLog& log);

/// Turns raw episodes into the duration pool and canonicalizes the timeline.
SemanticGraph build_timeline(const DraftGraph& draft, ConvertLog& log);

/// Full conversion. Any stage failure raises StageError with the stages reached.
SemanticGraph convert(const CaseNarrative& x, Gateway& gw, const ConvertOptions& opt, ConvertLog& log,
                      const StageSink& sink = {});

}  // namespace anonpsy
