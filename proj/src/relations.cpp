#include "anonpsy/relations.hpp"

#include <algorithm>
#include <regex>
#include <set>

#include "anonpsy/structured.hpp"
#include "anonpsy/temporal.hpp"
#include "anonpsy/text.hpp"

namespace anonpsy {

namespace {

std::string describe(const Relation& r) {
    return std::string(to_string(r.type)) + " " + r.source + " -> " + r.target;
}

bool node_covers_day0(const SemanticGraph& g, const SymptomNode& s) {
    return std::any_of(s.duration_ids.begin(), s.duration_ids.end(), [&](const std::string& id) {
        const auto* d = g.find_duration(id);
        return d && d->covers(0);
    });
}

std::string node_listing(const SemanticGraph& g) {
    std::string out;
    auto line = [&](const std::string& id, std::string_view type, const std::string& text) {
        out += id + " (" + std::string(type) + "): " + text + "\n";
    };
    for (const auto& n : g.diagnoses) line(n.id, "diagnosis", n.label);
    for (const auto& n : g.symptoms) line(n.id, "symptom", n.symptom);
    for (const auto& n : g.treatments) line(n.id, "treatment", n.name);
    for (const auto& n : g.past_history) line(n.id, "past_history", n.condition);
    return out;
}

}  // namespace

SemanticGraph build_presents_with(SemanticGraph g) {
    std::erase_if(g.relations, [](const Relation& r) { return r.type == RelationType::presents_with; });
    for (const auto& s : g.symptoms)
        if (node_covers_day0(g, s))
            g.relations.push_back({RelationType::presents_with, std::string(kVisitEventId), s.id});
    std::sort(g.relations.begin(), g.relations.end());
    return g;
}

std::optional<EtiologicLabel> parse_etiologic_label(std::string_view label) {
    const std::string text = text::normalize_ws(label);
    const std::string lower = text::to_lower(text);
    if (const auto pos = lower.find(" due to "); pos != std::string::npos) {
        EtiologicLabel out{text::trim(text.substr(pos + 8)), text::trim(text.substr(0, pos))};
        if (!out.cause.empty() && !out.base.empty()) return out;
    }
    static const std::regex kInduced(R"(^(.+?)[- ]induced\s+(.+)$)", std::regex::icase);
    std::smatch m;
    if (std::regex_match(text, m, kInduced)) {
        EtiologicLabel out{text::trim(m[1].str()), text::trim(m[2].str())};
        if (!out.cause.empty() && !out.base.empty()) return out;
    }
    return std::nullopt;
}

SemanticGraph link_etiology(SemanticGraph g) {
    g.sort_canonical();
    for (auto& dx : g.diagnoses) {
        const auto parsed = parse_etiologic_label(dx.label);
        if (!parsed) continue;
        std::optional<std::string> anchor;
        for (const auto& t : g.treatments)
            if (!anchor && (text::contains_ci(t.name, parsed->cause) || text::contains_ci(t.treatment_type, parsed->cause)))
                anchor = t.id;
        for (const auto& p : g.past_history)
            if (!anchor && text::contains_ci(p.condition, parsed->cause)) anchor = p.id;
        for (const auto& s : g.symptoms)
            if (!anchor && text::contains_ci(s.symptom, parsed->cause)) anchor = s.id;

        auto flag = std::find(dx.flags.begin(), dx.flags.end(), kUnanchoredEtiology);
        if (!anchor) {
            if (flag == dx.flags.end()) dx.flags.emplace_back(kUnanchoredEtiology);
            continue;
        }
        if (flag != dx.flags.end()) dx.flags.erase(flag);
        Relation r{RelationType::induces, *anchor, dx.id};
        if (std::find(g.relations.begin(), g.relations.end(), r) == g.relations.end())
            g.relations.push_back(std::move(r));
    }
    std::sort(g.relations.begin(), g.relations.end());
    return g;
}

SemanticGraph add_causal_edges_llm(SemanticGraph g, std::string_view narrative, Gateway& gw,
                                   const PromptVars& key_vars, double temperature, CausalPassLog& log) {
    PromptCall call{"causal_pass",
                    {{"narrative", std::string(narrative)}, {"nodes", node_listing(g)}},
                    key_vars,
                    temperature};
    Json reply;
    try {
        reply = parse_json_reply(gw.complete(gw.build(call)).text);
    } catch (const Error& e) {
        log.warnings.push_back(std::string("causal pass skipped: ") + e.what());
        return g;
    }
    drop_unknown_keys(reply, {"edges"}, "causal_pass", log.warnings);
    if (!reply.contains("edges") || !reply["edges"].is_array()) {
        log.warnings.push_back("causal pass reply has no edge list");
        return g;
    }

    const std::string haystack = text::to_lower(text::normalize_ws(narrative));
    for (std::size_t i = 0; i < reply["edges"].size(); ++i) {
        Json& e = reply["edges"][i];
        const std::string path = "causal_pass.edges[" + std::to_string(i) + "]";
        drop_unknown_keys(e, {"source_id", "target_id", "evidence"}, path, log.warnings);
        const auto src = json_text(e, "source_id");
        const auto dst = json_text(e, "target_id");
        const auto evidence = json_text(e, "evidence");
        if (!src || !dst) {
            log.rejected.push_back(path + ": missing endpoint");
            continue;
        }
        const Relation r{RelationType::induces, *src, *dst};
        const auto st = g.type_of(*src);
        const auto dt = g.type_of(*dst);
        if (!st || !dt) {
            log.rejected.push_back(describe(r) + ": unknown node");
        } else if (!is_allowed_pair(RelationType::induces, *st, *dt)) {
            log.rejected.push_back(describe(r) + ": illegal pair");
        } else if (!evidence || text::trim(*evidence).empty() ||
                   haystack.find(text::to_lower(text::normalize_ws(*evidence))) == std::string::npos) {
            log.rejected.push_back(describe(r) + ": evidence not found in narrative");
        } else if (std::find(g.relations.begin(), g.relations.end(), r) != g.relations.end()) {
            log.accepted.push_back(describe(r) + " (already present)");
        } else {
            log.accepted.push_back(describe(r));
            g.relations.push_back(r);
        }
    }
    std::sort(g.relations.begin(), g.relations.end());
    return g;
}

SemanticGraph filter_relations(SemanticGraph g, std::vector<std::string>& warnings) {
    std::set<Relation> seen;
    std::vector<Relation> kept;
    for (const auto& r : g.relations) {
        const auto st = g.type_of(r.source);
        const auto dt = g.type_of(r.target);
        if (!st || !dt) {
            warnings.push_back("dropped relation " + describe(r) + ": unknown node");
        } else if (!is_allowed_pair(r.type, *st, *dt)) {
            warnings.push_back("dropped relation " + describe(r) + ": illegal pair");
        } else if (!seen.insert(r).second) {
            warnings.push_back("dropped relation " + describe(r) + ": duplicate");
        } else {
            kept.push_back(r);
        }
    }
    g.relations = std::move(kept);
    std::sort(g.relations.begin(), g.relations.end());
    return g;
}

ConsistencyReport check_consistency(const SemanticGraph& g, const SemanticGraph& g2) {
    ConsistencyReport report;

    const auto a = temporal_signature(g);
    const auto b = temporal_signature(g2);
    for (const auto& [node, iv] : a) {
        auto it = b.find(node);
        if (it == b.end()) report.discrepancies.push_back("temporal: node '" + node + "' missing");
        else if (it->second != iv) report.discrepancies.push_back("temporal: node '" + node + "' intervals differ");
    }
    for (const auto& [node, iv] : b)
        if (!a.count(node)) report.discrepancies.push_back("temporal: node '" + node + "' added");

    const std::set<Relation> ra(g.relations.begin(), g.relations.end());
    const std::set<Relation> rb(g2.relations.begin(), g2.relations.end());
    for (const auto& r : ra)
        if (!rb.count(r)) report.discrepancies.push_back("relation: missing " + describe(r));
    for (const auto& r : rb)
        if (!ra.count(r)) report.discrepancies.push_back("relation: added " + describe(r));

    auto inventory = [](const SemanticGraph& x) {
        std::set<std::pair<std::string, std::string>> inv;
        for (const auto& n : x.diagnoses) inv.emplace("diagnosis", n.id);
        for (const auto& n : x.symptoms) inv.emplace("symptom", n.id);
        for (const auto& n : x.treatments) inv.emplace("treatment", n.id);
        for (const auto& n : x.past_history) inv.emplace("past_history", n.id);
        return inv;
    };
    const auto ia = inventory(g);
    const auto ib = inventory(g2);
    for (const auto& [type, id] : ia)
        if (!ib.count({type, id})) report.discrepancies.push_back("inventory: " + type + " '" + id + "' missing");
    for (const auto& [type, id] : ib)
        if (!ia.count({type, id})) report.discrepancies.push_back("inventory: " + type + " '" + id + "' added");
    return report;
}

}  // namespace anonpsy
