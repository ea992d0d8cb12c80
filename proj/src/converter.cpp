#include "anonpsy/converter.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "anonpsy/graph_yaml.hpp"
#include "anonpsy/structured.hpp"
#include "anonpsy/temporal.hpp"
#include "anonpsy/text.hpp"

namespace anonpsy {

namespace {

std::string item_path(const std::string& key, std::size_t i) {
    return key + "[" + std::to_string(i) + "]";
}

std::optional<std::int64_t> json_int(const Json& obj, std::string_view key) {
    auto it = obj.find(std::string(key));
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (it->is_number_integer()) return it->get<std::int64_t>();
    if (it->is_number_float()) {
        const double v = it->get<double>();
        if (std::floor(v) == v) return static_cast<std::int64_t>(v);
        return std::nullopt;
    }
    if (it->is_string()) {
        const std::string s = text::trim(it->get<std::string>());
        try {
            std::size_t used = 0;
            const long long v = std::stoll(s, &used);
            if (used == s.size()) return v;
        } catch (const std::exception&) {
        }
    }
    return std::nullopt;
}

bool json_bool(const Json& obj, std::string_view key) {
    auto it = obj.find(std::string(key));
    if (it == obj.end()) return false;
    if (it->is_boolean()) return it->get<bool>();
    if (it->is_string()) return text::to_lower(it->get<std::string>()) == "true";
    return false;
}

std::string json_str(const Json& obj, std::string_view key) { return json_text(obj, key).value_or(""); }

std::vector<std::string> json_str_list(const Json& obj, std::string_view key) {
    std::vector<std::string> out;
    auto it = obj.find(std::string(key));
    if (it == obj.end()) return out;
    if (it->is_string()) {
        if (!it->get<std::string>().empty()) out.push_back(it->get<std::string>());
        return out;
    }
    if (!it->is_array()) return out;
    for (const auto& v : *it)
        if (v.is_string() && !v.get<std::string>().empty()) out.push_back(v.get<std::string>());
    return out;
}

const Json& json_list(const Json& obj, std::string_view key) {
    static const Json kEmpty = Json::array();
    auto it = obj.find(std::string(key));
    return it != obj.end() && it->is_array() ? *it : kEmpty;
}

Json ask_json(Gateway& gw, const PromptCall& call, int attempts) {
    Json parsed;
    const auto reply = complete_validated(gw, call, attempts, [&](const std::string& text) -> std::optional<std::string> {
        try {
            parsed = parse_json_reply(text);
            return std::nullopt;
        } catch (const Error& e) {
            return std::string(e.what());
        }
    });
    if (!reply.accepted) throw Error(call.template_id + ": unparseable structured response");
    return parsed;
}

bool has_prefix(const std::string& id, std::string_view prefix) {
    return id.size() > prefix.size() && id.compare(0, prefix.size(), prefix) == 0;
}

/// Shared id checks for LLM-proposed nodes.
bool accept_id(const std::string& id, std::string_view prefix, const std::string& path,
               std::set<std::string>& seen, ConvertLog& log) {
    if (!has_prefix(id, prefix)) {
        log.warnings.push_back(path + ": dropped record with id '" + id + "' (expected prefix " +
                               std::string(prefix) + ")");
        return false;
    }
    if (!seen.insert(id).second) {
        log.warnings.push_back(path + ": dropped record with duplicate id '" + id + "'");
        return false;
    }
    return true;
}

void parse_visit(const Json& v, VisitEvent& out, ConvertLog& log) {
    Json obj = v;
    drop_unknown_keys(obj, {"setting", "arrival_mode", "legal_status", "reason_for_visit", "safety_flags",
                            "source_of_information", "pathway", "visit_episode"},
                      "visit_event", log.warnings);
    out.setting = json_str(obj, "setting");
    out.arrival_mode = json_str(obj, "arrival_mode");
    out.legal_status = json_str(obj, "legal_status");
    out.reason_for_visit = json_str(obj, "reason_for_visit");
    out.safety_flags = json_str_list(obj, "safety_flags");
    out.source_of_information = json_str(obj, "source_of_information");
    out.pathway = json_text(obj, "pathway");
    if (out.pathway && text::trim(*out.pathway).empty()) out.pathway.reset();
    out.visit_episode = json_str(obj, "visit_episode");
}

std::string node_listing(const SemanticGraph& g) {
    std::string out;
    for (const auto& n : g.symptoms) out += n.id + " (symptom): " + n.symptom + " - " + n.evidence_text + "\n";
    for (const auto& n : g.treatments) out += n.id + " (treatment): " + n.name + "\n";
    for (const auto& n : g.past_history) out += n.id + " (past_history): " + n.condition + "\n";
    return out;
}

std::string yaml_of_draft(const SemanticGraph& g) { return yaml::emit(graph_to_tree(g), {"duration_ids", "flags"}); }

std::string yaml_of_episodes(const DraftGraph& d) {
    yaml::Tree doc = yaml::Tree::object();
    for (const auto& [node, eps] : d.episodes) {
        yaml::Tree list = yaml::Tree::array();
        for (const auto& e : eps) {
            yaml::Tree item = yaml::Tree::object();
            item["offset"] = e.offset;
            if (e.span) item["span"] = *e.span;
            item["unit"] = std::string(to_string(e.unit));
            item["ongoing"] = e.ongoing;
            item["inferred"] = e.inferred;
            item["age_anchored"] = e.age_anchored;
            list.push_back(std::move(item));
        }
        doc[node] = std::move(list);
    }
    return yaml::emit(doc);
}

void check_narrative_order(const CaseNarrative& x, const DraftGraph& d, ConvertLog& log) {
    struct Item {
        std::size_t pos;
        Day start;
        bool inferred;
        std::string id;
    };
    const std::string hay = text::to_lower(text::normalize_ws(x.text));
    std::vector<Item> items;
    for (const auto& s : d.graph.symptoms) {
        const auto pos = hay.find(text::to_lower(text::normalize_ws(s.evidence_text)));
        auto it = d.episodes.find(s.id);
        if (pos == std::string::npos || s.evidence_text.empty() || it == d.episodes.end()) continue;
        for (const auto& e : it->second)
            items.push_back({pos, e.offset * days_per(e.unit), e.inferred, s.id});
    }
    for (const auto& inf : items) {
        if (!inf.inferred) continue;
        for (const auto& anchor : items) {
            if (anchor.inferred) continue;
            const bool before_in_text = anchor.pos < inf.pos;
            if ((before_in_text && inf.start < anchor.start) || (anchor.pos > inf.pos && inf.start > anchor.start)) {
                log.flags.push_back("inferred episode of " + inf.id + " breaks narrative order relative to " +
                                    anchor.id);
                break;
            }
        }
    }
}

}  // namespace

std::string ConvertLog::render() const {
    std::string out;
    for (const auto& s : stages) out += "stage: " + s + "\n";
    for (const auto& w : warnings) out += "warning: " + w + "\n";
    for (const auto& f : flags) out += "flag: " + f + "\n";
    for (const auto& a : causal.accepted) out += "causal accepted: " + a + "\n";
    for (const auto& r : causal.rejected) out += "causal rejected: " + r + "\n";
    for (const auto& w : causal.warnings) out += "causal warning: " + w + "\n";
    return out;
}

DraftGraph extract_entities(const CaseNarrative& x, Gateway& gw, const ConvertOptions& opt, ConvertLog& log) {
    DraftGraph draft;
    SemanticGraph& g = draft.graph;

    std::string dx_list;
    for (std::size_t i = 0; i < x.ground_truth_diagnoses.size(); ++i) {
        const std::string id = fresh_id("d_", [&] {
            std::vector<std::string> ids;
            for (const auto& d : g.diagnoses) ids.push_back(d.id);
            return ids;
        }());
        g.diagnoses.push_back({id, x.ground_truth_diagnoses[i], {}});
        dx_list += id + ": " + x.ground_truth_diagnoses[i] + "\n";
    }

    Json reply = ask_json(gw,
                          {"extract_entities",
                           {{"narrative", x.text}, {"diagnoses", dx_list}},
                           {{"case_id", x.case_id}},
                           opt.temperature},
                          opt.max_attempts);
    drop_unknown_keys(reply, {"demographics", "family_history", "test_results", "symptoms", "treatments",
                              "past_history", "visit_event", "relations"},
                      "extract_entities", log.warnings);

    if (reply.contains("demographics") && reply["demographics"].is_object()) {
        Json d = reply["demographics"];
        drop_unknown_keys(d, {"age", "sex", "ethnicity", "occupation", "family_structure"}, "demographics",
                          log.warnings);
        auto& out = g.attributes.demographics;
        if (auto age = json_int(d, "age"); age && *age >= 0) {
            out.age = *age;
        } else {
            log.warnings.push_back("demographics.age: missing or invalid, set to 0");
        }
        out.sex = json_str(d, "sex");
        out.ethnicity = json_str(d, "ethnicity");
        out.occupation = json_str(d, "occupation");
        out.family_structure = json_str(d, "family_structure");
    } else {
        log.warnings.push_back("demographics: missing");
    }

    const Json& fh = json_list(reply, "family_history");
    for (std::size_t i = 0; i < fh.size(); ++i) {
        Json e = fh[i];
        drop_unknown_keys(e, {"member", "condition", "evidence_text"}, item_path("family_history", i), log.warnings);
        if (json_str(e, "condition").empty()) {
            log.warnings.push_back(item_path("family_history", i) + ": dropped entry without condition");
            continue;
        }
        g.attributes.family_history.push_back({json_str(e, "member"), json_str(e, "condition"), json_str(e, "evidence_text")});
    }

    if (reply.contains("test_results") && reply["test_results"].is_object()) {
        Json t = reply["test_results"];
        drop_unknown_keys(t, {"labs", "imaging", "mental_status", "other"}, "test_results", log.warnings);
        auto& out = g.attributes.test_results;
        out.labs = json_str(t, "labs");
        out.imaging = json_str(t, "imaging");
        out.mental_status = json_str(t, "mental_status");
        out.other = json_str(t, "other");
    }

    std::set<std::string> seen;
    for (const auto& d : g.diagnoses) seen.insert(d.id);

    const std::string haystack = text::to_lower(text::normalize_ws(x.text));
    const Json& sx = json_list(reply, "symptoms");
    for (std::size_t i = 0; i < sx.size(); ++i) {
        const std::string path = item_path("symptoms", i);
        Json e = sx[i];
        drop_unknown_keys(e, {"id", "symptom", "pattern", "current_symptom", "evidence_text", "contexts"}, path,
                          log.warnings);
        SymptomNode n;
        n.id = json_str(e, "id");
        n.symptom = text::trim(json_str(e, "symptom"));
        if (n.symptom.empty()) {
            log.warnings.push_back(path + ": dropped symptom without headword");
            continue;
        }
        if (!accept_id(n.id, "s_", path, seen, log)) continue;
        n.pattern = json_str(e, "pattern");
        n.evidence_text = json_str(e, "evidence_text");
        if (!n.evidence_text.empty() &&
            haystack.find(text::to_lower(text::normalize_ws(n.evidence_text))) == std::string::npos)
            log.flags.push_back(path + ": evidence_text is not a verbatim span of the narrative");
        draft.initial_current[n.id] = json_bool(e, "current_symptom");
        const Json& ctx = json_list(e, "contexts");
        for (std::size_t c = 0; c < ctx.size(); ++c) {
            const std::string cpath = path + ".contexts[" + std::to_string(c) + "]";
            Json frame = ctx[c];
            if (!frame.is_object()) {
                log.warnings.push_back(cpath + ": dropped non-object context");
                continue;
            }
            drop_unknown_keys(frame, {"situation", "thought", "emotion", "behavior"}, cpath, log.warnings);
            StebContext sc;
            for (StebField f : kStebFields) {
                auto v = json_text(frame, to_string(f));
                if (v && !text::trim(*v).empty()) field(sc, f) = *v;
            }
            if (sc.empty()) {
                log.warnings.push_back(cpath + ": dropped empty STEB frame");
                continue;
            }
            n.contexts.push_back(std::move(sc));
        }
        g.symptoms.push_back(std::move(n));
    }

    const Json& tx = json_list(reply, "treatments");
    for (std::size_t i = 0; i < tx.size(); ++i) {
        const std::string path = item_path("treatments", i);
        Json e = tx[i];
        drop_unknown_keys(e, {"id", "treatment_type", "name", "dose", "route", "frequency", "outcome"}, path,
                          log.warnings);
        TreatmentNode n;
        n.id = json_str(e, "id");
        n.name = text::trim(json_str(e, "name"));
        if (n.name.empty()) {
            log.warnings.push_back(path + ": dropped treatment without name");
            continue;
        }
        if (!accept_id(n.id, "t_", path, seen, log)) continue;
        n.treatment_type = json_str(e, "treatment_type");
        n.dose = json_text(e, "dose");
        n.frequency = json_text(e, "frequency");
        n.outcome = json_text(e, "outcome");
        if (auto route = json_text(e, "route")) {
            const std::string r = text::to_lower(text::trim(*route));
            if (is_known_route(r)) n.route = r;
            else if (!r.empty()) log.warnings.push_back(path + ".route: dropped '" + *route + "' (not in vocabulary)");
        }
        for (auto* opt_field : {&n.dose, &n.frequency, &n.outcome})
            if (*opt_field && text::trim(**opt_field).empty()) opt_field->reset();
        g.treatments.push_back(std::move(n));
    }

    const Json& px = json_list(reply, "past_history");
    for (std::size_t i = 0; i < px.size(); ++i) {
        const std::string path = item_path("past_history", i);
        Json e = px[i];
        drop_unknown_keys(e, {"id", "condition"}, path, log.warnings);
        PastHistoryNode n{json_str(e, "id"), text::trim(json_str(e, "condition")), {}};
        if (n.condition.empty()) {
            log.warnings.push_back(path + ": dropped past history without condition");
            continue;
        }
        if (!accept_id(n.id, "ph_", path, seen, log)) continue;
        g.past_history.push_back(std::move(n));
    }

    if (reply.contains("visit_event")) {
        const Json& v = reply["visit_event"];
        if (v.is_array()) {
            if (v.empty()) log.warnings.push_back("visit_event: empty list");
            if (!v.empty() && v[0].is_object()) parse_visit(v[0], g.visit_event, log);
            for (std::size_t i = 1; i < v.size(); ++i)
                log.warnings.push_back(item_path("visit_event", i) + ": rejected additional visit event");
        } else if (v.is_object()) {
            parse_visit(v, g.visit_event, log);
        }
    } else {
        log.warnings.push_back("visit_event: missing");
    }

    const Json& rx = json_list(reply, "relations");
    for (std::size_t i = 0; i < rx.size(); ++i) {
        const std::string path = item_path("relations", i);
        Json e = rx[i];
        drop_unknown_keys(e, {"type", "source", "target"}, path, log.warnings);
        const auto type = parse_relation_type(json_str(e, "type"));
        if (!type || (*type != RelationType::manifests_as && *type != RelationType::treatment_of)) {
            log.warnings.push_back(path + ": dropped relation of type '" + json_str(e, "type") + "'");
            continue;
        }
        g.relations.push_back({*type, json_str(e, "source"), json_str(e, "target")});
    }
    g = filter_relations(std::move(g), log.warnings);
    g.sort_canonical();
    return draft;
}

void extract_episodes(const CaseNarrative& x, DraftGraph& draft, Gateway& gw, const ConvertOptions& opt,
                      ConvertLog& log) {
    const SemanticGraph& g = draft.graph;
    std::set<std::string> timed;
    for (const auto& n : g.symptoms) timed.insert(n.id);
    for (const auto& n : g.treatments) timed.insert(n.id);
    for (const auto& n : g.past_history) timed.insert(n.id);

    if (!timed.empty()) {
        Json reply = ask_json(gw,
                              {"extract_episodes",
                               {{"narrative", x.text}, {"nodes", node_listing(g)}},
                               {{"case_id", x.case_id}},
                               opt.temperature},
                              opt.max_attempts);
        drop_unknown_keys(reply, {"episodes"}, "extract_episodes", log.warnings);
        const Json& list = json_list(reply, "episodes");
        for (std::size_t i = 0; i < list.size(); ++i) {
            const std::string path = item_path("episodes", i);
            Json e = list[i];
            drop_unknown_keys(e, {"node_id", "offset", "span", "unit", "ongoing", "inferred", "age_anchored"},
                              path, log.warnings);
            const std::string node = json_str(e, "node_id");
            if (!timed.count(node)) {
                log.warnings.push_back(path + ": dropped episode for unknown node '" + node + "'");
                continue;
            }
            const std::string unit_text = text::to_lower(json_str(e, "unit"));
            const auto unit = parse_time_unit(unit_text);
            if (!unit) {
                log.flags.push_back(node + ": rejected episode with unit '" + unit_text + "'");
                continue;
            }
            RawEpisode ep;
            ep.unit = *unit;
            ep.ongoing = json_bool(e, "ongoing");
            ep.inferred = json_bool(e, "inferred");
            ep.age_anchored = json_bool(e, "age_anchored");
            const auto offset = json_int(e, "offset");
            if (!offset) {
                log.warnings.push_back(path + ": dropped episode without integer offset");
                continue;
            }
            ep.offset = *offset;
            ep.span = json_int(e, "span");
            if (ep.span && *ep.span < 0) {
                log.warnings.push_back(path + ": dropped episode with negative span");
                continue;
            }
            if (!ep.span && !ep.ongoing) {
                log.warnings.push_back(path + ": dropped finished episode without span");
                continue;
            }
            if (ep.inferred) log.flags.push_back(node + ": inferred episode");
            draft.episodes[node].push_back(ep);
        }
    }

    for (const auto& id : timed) {
        auto& eps = draft.episodes[id];
        if (!eps.empty()) continue;
        RawEpisode def;
        def.ongoing = true;
        def.inferred = true;
        eps.push_back(def);
        log.flags.push_back(id + ": no episode, assigned default ongoing episode at day 0");
    }
    check_narrative_order(x, draft, log);
}

SemanticGraph build_timeline(const DraftGraph& draft, ConvertLog& log) {
    SemanticGraph g = draft.graph;
    g.sort_canonical();
    std::vector<RawEpisode> all;
    for (const auto& [node, eps] : draft.episodes) all.insert(all.end(), eps.begin(), eps.end());
    const TimelineHorizon h = compute_horizon(all);

    std::vector<std::string> used;
    auto attach = [&](const std::string& node, std::vector<std::string>& ids) {
        auto it = draft.episodes.find(node);
        if (it == draft.episodes.end()) return;
        for (const auto& e : it->second) {
            DaySpan ds;
            try {
                ds = to_days(e, h);
            } catch (const Error& err) {
                ds = {e.offset * days_per(e.unit), 1};
                log.flags.push_back(node + ": " + err.what() + ", clamped to one day");
            }
            DurationInterval d;
            d.id = fresh_id("du_", used);
            used.push_back(d.id);
            d.offset_days = ds.start;
            d.span_days = ds.span;
            d.age_anchored = e.age_anchored;
            ids.push_back(d.id);
            g.durations.push_back(std::move(d));
        }
    };
    for (auto& n : g.symptoms) attach(n.id, n.duration_ids);
    for (auto& n : g.treatments) attach(n.id, n.duration_ids);
    for (auto& n : g.past_history) attach(n.id, n.duration_ids);

    g = canonicalize_timeline(std::move(g));

    for (const auto& [id, stated] : draft.initial_current) {
        const auto* s = g.find_symptom(id);
        if (s && s->current_symptom != stated)
            log.flags.push_back(id + ": current_symptom recomputed from " + (stated ? "true" : "false") +
                                " to " + (s->current_symptom ? "true" : "false"));
    }
    return g;
}

SemanticGraph convert(const CaseNarrative& x, Gateway& gw, const ConvertOptions& opt, ConvertLog& log,
                      const StageSink& sink) {
    auto stage = [&](const std::string& name, auto&& fn) {
        log.stages.push_back(name);
        try {
            return fn();
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& e) {
            throw StageError(log.stages, name + ": " + e.what());
        }
    };
    auto emit = [&](const std::string& name, const std::string& yaml_text) {
        if (sink) sink(name, yaml_text);
    };

    if (text::trim(x.text).empty()) throw StageError({"input"}, "narrative is empty");

    DraftGraph draft = stage("extract_entities", [&] { return extract_entities(x, gw, opt, log); });
    emit("01_entities", yaml_of_draft(draft.graph));

    stage("extract_episodes", [&] {
        extract_episodes(x, draft, gw, opt, log);
        return 0;
    });
    emit("02_episodes", yaml_of_episodes(draft));

    SemanticGraph g = stage("timeline", [&] { return build_timeline(draft, log); });
    emit("03_timeline", yaml_of_draft(g));

    g = stage("relations", [&] {
        SemanticGraph out = filter_relations(std::move(g), log.warnings);
        out = build_presents_with(std::move(out));
        out = link_etiology(std::move(out));
        for (const auto& d : out.diagnoses)
            if (std::find(d.flags.begin(), d.flags.end(), kUnanchoredEtiology) != d.flags.end())
                log.flags.push_back(d.id + ": unanchored etiology");
        out = add_causal_edges_llm(std::move(out), x.text, gw, {{"case_id", x.case_id}}, opt.temperature,
                                   log.causal);
        return out;
    });

    return stage("validate", [&] {
        if (auto report = validate_graph(g); !report.empty()) throw Error("invalid graph:\n" + format_report(report));
        if (auto report = validate_canonical(g); !report.empty())
            throw Error("graph is not canonical:\n" + format_report(report));
        g.sort_canonical();
        return g;
    });
}

}  // namespace anonpsy
