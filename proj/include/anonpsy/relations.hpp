#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "anonpsy/gateway.hpp"
#include "anonpsy/graph.hpp"

namespace anonpsy {

/// Replaces all PRESENTS_WITH edges with one edge per symptom whose interval covers day 0.
SemanticGraph build_presents_with(SemanticGraph g);

struct EtiologicLabel {
    std::string cause;
    std::string base;

    bool operator==(const EtiologicLabel&) const = default;
};

/// Splits "X due to Y" and "Y-induced X" labels into cause Y and base X.
std::optional<EtiologicLabel> parse_etiologic_label(std::string_view label);

inline constexpr std::string_view kUnanchoredEtiology = "unanchored etiology";

/// Adds INDUCES from the node whose text contains the cause phrase (treatment before past history
/// before symptom, then smallest id). Diagnoses without a match get the "unanchored etiology" flag.
SemanticGraph link_etiology(SemanticGraph g);

struct CausalPassLog {
    std::vector<std::string> accepted;
    std::vector<std::string> rejected;
    std::vector<std::string> warnings;
};

/// Asks the model for explicit causal statements and keeps INDUCES proposals that are legal, refer
/// to existing nodes and quote evidence found in `narrative`. Gateway failure leaves `g` as is and
/// records a warning.
SemanticGraph add_causal_edges_llm(SemanticGraph g, std::string_view narrative, Gateway& gw,
                                   const PromptVars& key_vars, double temperature, CausalPassLog& log);

/// Drops relations with dangling endpoints, illegal pairs or duplicates.
SemanticGraph filter_relations(SemanticGraph g, std::vector<std::string>& warnings);

struct ConsistencyReport {
    std::vector<std::string> discrepancies;
    bool passed() const { return discrepancies.empty(); }
};

/// Compares temporal signatures, relation sets and node inventories of two graphs.
ConsistencyReport check_consistency(const SemanticGraph& g, const SemanticGraph& g2);

}  // namespace anonpsy
