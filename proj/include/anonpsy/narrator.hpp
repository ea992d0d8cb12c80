#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "anonpsy/gateway.hpp"
#include "anonpsy/graph.hpp"
#include "anonpsy/yaml.hpp"

namespace anonpsy {

enum class Lexicon { admission, generic };
std::string_view to_string(Lexicon lexicon);

/// "two weeks before admission", "the day after admission", "one year earlier", ...
std::string time_phrase(Day offset_days, Lexicon lexicon);

Lexicon choose_lexicon(const SemanticGraph& g);

struct LeadSummary {
    std::int64_t age = 0;
    std::string sex;
    std::string setting;
    std::string arrival_mode;
    std::string reason;
    std::optional<std::string> pathway;
    std::string source;
    std::string visit_episode;

    bool operator==(const LeadSummary&) const = default;
};

/// Where an item is narrated on the timeline. Undated anchors (no duration) sort last.
struct Anchor {
    std::string duration_id;  // empty when undated
    std::optional<Day> start;

    bool operator==(const Anchor&) const = default;
};

struct PrepassEntry {
    std::string past_history_id;
    Anchor anchor;
    std::vector<std::string> treatment_ids;
    std::vector<std::string> induced_cluster_ids;

    bool operator==(const PrepassEntry&) const = default;
};

/// Micro-paragraph for one (duration, diagnosis) pair. An empty diagnosis_id is the unattributed group.
struct OutlineBlock {
    Anchor anchor;
    std::string diagnosis_id;
    std::vector<std::string> symptom_ids;
    /// One regimen: treatments sharing the duration and the target.
    std::vector<std::string> treatment_ids;
    std::vector<std::string> induced_cluster_ids;

    bool operator==(const OutlineBlock&) const = default;
};

struct InducedCluster {
    std::string id;
    std::string source_id;
    std::string diagnosis_id;
    std::vector<std::string> symptom_ids;
    std::vector<std::string> treatment_ids;
    /// Clusters whose inducing item belongs to this cluster.
    std::vector<std::string> induced_cluster_ids;

    bool operator==(const InducedCluster&) const = default;
};

struct OutlineTail {
    std::vector<std::string> past_history_ids;
    std::vector<FamilyHistoryEntry> family_history;
    std::vector<std::pair<std::string, std::string>> tests;  // (field, text)

    bool operator==(const OutlineTail&) const = default;
};

struct NarrativeOutline {
    Lexicon lexicon = Lexicon::generic;
    LeadSummary lead;
    std::vector<PrepassEntry> prepass;
    std::vector<OutlineBlock> blocks;
    std::vector<InducedCluster> induced_clusters;
    OutlineTail tail;
    /// (item id, duration id) pairs in narration order.
    std::vector<std::pair<std::string, std::string>> ledger;

    const InducedCluster* find_cluster(std::string_view id) const;
    yaml::Tree to_tree() const;
    std::string to_yaml() const;

    bool operator==(const NarrativeOutline&) const = default;
};

/// Deterministic content plan for a validated, reconciled graph.
NarrativeOutline plan_outline(const SemanticGraph& g);

struct NarratorOptions {
    std::string case_id;
    double lead_temperature = 0.1;
    double sentence_temperature = 0.2;
    double tail_temperature = 0.1;
    int max_attempts = 3;
};

/// Reasons a lead or tail paragraph is not acceptable as patient-facing prose (empty when clean).
std::vector<std::string> identifier_violations(std::string_view text);

/// Removes quotation wrappers and role-prefixed lines from a model reply.
std::string strip_meta_text(std::string_view reply);

/// Two to five sentences; throws GatewayError when every attempt is rejected.
std::string narrate_lead(const NarrativeOutline& outline, Gateway& gw, const NarratorOptions& opt);

struct HistoryText {
    std::string text;
    std::vector<std::string> flags;
};

HistoryText narrate_history(const NarrativeOutline& outline, const SemanticGraph& g, Gateway& gw,
                            const NarratorOptions& opt);

/// Appends one to four sentences covering the tail; the draft is never rewritten.
HistoryText append_tail(const std::string& draft, const NarrativeOutline& outline, const SemanticGraph& g,
                        Gateway& gw, const NarratorOptions& opt);

struct GeneratedNarrative {
    std::string text;
    NarrativeOutline outline;
    std::vector<std::string> flags;
};

GeneratedNarrative generate(const SemanticGraph& g, Gateway& gw, const NarratorOptions& opt);

}  // namespace anonpsy
