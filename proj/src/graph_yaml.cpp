#include "anonpsy/graph_yaml.hpp"

#include "anonpsy/error.hpp"
#include "anonpsy/yaml_reader.hpp"

namespace anonpsy {

using yaml::MapReader;
using yaml::Tree;

namespace {

const std::set<std::string, std::less<>> kFlowKeys = {"duration_ids", "flags"};

Tree id_list(const std::vector<std::string>& ids) {
    Tree arr = Tree::array();
    for (const auto& id : ids) arr.push_back(id);
    return arr;
}

void put_optional(Tree& obj, const char* key, const std::optional<std::string>& v) {
    if (v) obj[key] = *v;
}

std::string item_path(const std::string& key, std::size_t i) {
    return key + "[" + std::to_string(i) + "]";
}

StebContext steb_from_tree(const Tree& node, const std::string& path) {
    MapReader r(node, path, {"situation", "thought", "emotion", "behavior"});
    StebContext ctx;
    for (StebField f : kStebFields) field(ctx, f) = r.opt_str(to_string(f));
    if (ctx.empty()) throw ParseError(path, "STEB frame has no fields");
    return ctx;
}

}  // namespace

Tree steb_to_tree(const StebContext& ctx) {
    Tree obj = Tree::object();
    for (StebField f : kStebFields)
        if (const auto& v = field(ctx, f)) obj[std::string(to_string(f))] = *v;
    return obj;
}

Tree graph_to_tree(const SemanticGraph& input) {
    SemanticGraph g = input;
    g.sort_canonical();

    Tree doc = Tree::object();
    const auto& d = g.attributes.demographics;
    doc["demographics"] = Tree::object();
    doc["demographics"]["age"] = d.age;
    doc["demographics"]["sex"] = d.sex;
    doc["demographics"]["ethnicity"] = d.ethnicity;
    doc["demographics"]["occupation"] = d.occupation;
    doc["demographics"]["family_structure"] = d.family_structure;

    const auto& t = g.attributes.test_results;
    doc["test_results"] = Tree::object();
    doc["test_results"]["labs"] = t.labs;
    doc["test_results"]["imaging"] = t.imaging;
    doc["test_results"]["mental_status"] = t.mental_status;
    doc["test_results"]["other"] = t.other;

    doc["family_history"] = Tree::array();
    for (const auto& f : g.attributes.family_history) {
        Tree e = Tree::object();
        e["member"] = f.member;
        e["condition"] = f.condition;
        e["evidence_text"] = f.evidence_text;
        doc["family_history"].push_back(std::move(e));
    }

    doc["diagnoses"] = Tree::array();
    for (const auto& n : g.diagnoses) {
        Tree e = Tree::object();
        e["id"] = n.id;
        e["label"] = n.label;
        if (!n.flags.empty()) e["flags"] = id_list(n.flags);
        doc["diagnoses"].push_back(std::move(e));
    }

    doc["symptoms"] = Tree::array();
    for (const auto& n : g.symptoms) {
        Tree e = Tree::object();
        e["id"] = n.id;
        e["symptom"] = n.symptom;
        e["pattern"] = n.pattern;
        e["current_symptom"] = n.current_symptom;
        e["evidence_text"] = n.evidence_text;
        e["contexts"] = Tree::array();
        for (const auto& c : n.contexts) e["contexts"].push_back(steb_to_tree(c));
        e["duration_ids"] = id_list(n.duration_ids);
        doc["symptoms"].push_back(std::move(e));
    }

    doc["treatments"] = Tree::array();
    for (const auto& n : g.treatments) {
        Tree e = Tree::object();
        e["id"] = n.id;
        e["treatment_type"] = n.treatment_type;
        e["name"] = n.name;
        put_optional(e, "dose", n.dose);
        put_optional(e, "route", n.route);
        put_optional(e, "frequency", n.frequency);
        put_optional(e, "outcome", n.outcome);
        e["duration_ids"] = id_list(n.duration_ids);
        doc["treatments"].push_back(std::move(e));
    }

    doc["past_history"] = Tree::array();
    for (const auto& n : g.past_history) {
        Tree e = Tree::object();
        e["id"] = n.id;
        e["condition"] = n.condition;
        e["duration_ids"] = id_list(n.duration_ids);
        doc["past_history"].push_back(std::move(e));
    }

    const auto& v = g.visit_event;
    Tree ve = Tree::object();
    ve["setting"] = v.setting;
    ve["arrival_mode"] = v.arrival_mode;
    ve["legal_status"] = v.legal_status;
    ve["reason_for_visit"] = v.reason_for_visit;
    ve["safety_flags"] = id_list(v.safety_flags);
    ve["source_of_information"] = v.source_of_information;
    put_optional(ve, "pathway", v.pathway);
    ve["visit_episode"] = v.visit_episode;
    doc["visit_event"] = std::move(ve);

    doc["relations"] = Tree::array();
    for (const auto& r : g.relations) {
        Tree e = Tree::object();
        e["type"] = std::string(to_string(r.type));
        e["source"] = r.source;
        e["target"] = r.target;
        doc["relations"].push_back(std::move(e));
    }

    doc["durations"] = Tree::array();
    for (const auto& du : g.durations) {
        Tree e = Tree::object();
        e["id"] = du.id;
        e["offset_days"] = du.offset_days;
        e["span_days"] = du.span_days;
        e["virtual"] = du.is_virtual;
        e["age_anchored"] = du.age_anchored;
        doc["durations"].push_back(std::move(e));
    }
    return doc;
}

SemanticGraph graph_from_tree(const Tree& doc) {
    MapReader top(doc, "", {"demographics", "test_results", "family_history", "diagnoses",
                            "symptoms", "treatments", "past_history", "visit_event",
                            "relations", "durations"});
    SemanticGraph g;

    {
        MapReader r(top.child("demographics"), "demographics",
                    {"age", "sex", "ethnicity", "occupation", "family_structure"});
        auto& d = g.attributes.demographics;
        d.age = r.integer("age");
        if (d.age < 0) throw ParseError(r.path("age"), "age < 0");
        d.sex = r.str_or("sex", "");
        d.ethnicity = r.str_or("ethnicity", "");
        d.occupation = r.str_or("occupation", "");
        d.family_structure = r.str_or("family_structure", "");
    }
    {
        MapReader r(top.child("test_results"), "test_results",
                    {"labs", "imaging", "mental_status", "other"});
        auto& t = g.attributes.test_results;
        // all four keys are mandatory, values may be empty strings
        r.child("labs");
        r.child("imaging");
        r.child("mental_status");
        r.child("other");
        t.labs = r.str_or("labs", "");
        t.imaging = r.str_or("imaging", "");
        t.mental_status = r.str_or("mental_status", "");
        t.other = r.str_or("other", "");
    }

    const Tree& fh = top.list("family_history");
    for (std::size_t i = 0; i < fh.size(); ++i) {
        MapReader r(fh[i], item_path("family_history", i), {"member", "condition", "evidence_text"});
        g.attributes.family_history.push_back(
            {r.str_or("member", ""), r.str_or("condition", ""), r.str_or("evidence_text", "")});
    }

    const Tree& dx = top.list("diagnoses");
    for (std::size_t i = 0; i < dx.size(); ++i) {
        MapReader r(dx[i], item_path("diagnoses", i), {"id", "label", "flags"});
        g.diagnoses.push_back({r.str("id"), r.str("label"), r.str_list("flags")});
    }

    const Tree& sx = top.list("symptoms");
    for (std::size_t i = 0; i < sx.size(); ++i) {
        const std::string p = item_path("symptoms", i);
        MapReader r(sx[i], p, {"id", "symptom", "pattern", "current_symptom", "evidence_text",
                               "contexts", "duration_ids"});
        SymptomNode n;
        n.id = r.str("id");
        n.symptom = r.str("symptom");
        n.pattern = r.str_or("pattern", "");
        n.current_symptom = r.boolean("current_symptom");
        n.evidence_text = r.str_or("evidence_text", "");
        const Tree& ctx = r.list("contexts");
        for (std::size_t c = 0; c < ctx.size(); ++c)
            n.contexts.push_back(steb_from_tree(ctx[c], r.path("contexts") + "[" + std::to_string(c) + "]"));
        n.duration_ids = r.str_list("duration_ids");
        g.symptoms.push_back(std::move(n));
    }

    const Tree& tx = top.list("treatments");
    for (std::size_t i = 0; i < tx.size(); ++i) {
        MapReader r(tx[i], item_path("treatments", i),
                    {"id", "treatment_type", "name", "dose", "route", "frequency", "outcome",
                     "duration_ids"});
        TreatmentNode n;
        n.id = r.str("id");
        n.treatment_type = r.str_or("treatment_type", "");
        n.name = r.str_or("name", "");
        n.dose = r.opt_str("dose");
        n.route = r.opt_str("route");
        n.frequency = r.opt_str("frequency");
        n.outcome = r.opt_str("outcome");
        n.duration_ids = r.str_list("duration_ids");
        g.treatments.push_back(std::move(n));
    }

    const Tree& px = top.list("past_history");
    for (std::size_t i = 0; i < px.size(); ++i) {
        MapReader r(px[i], item_path("past_history", i), {"id", "condition", "duration_ids"});
        g.past_history.push_back({r.str("id"), r.str("condition"), r.str_list("duration_ids")});
    }

    {
        MapReader r(top.child("visit_event"), "visit_event",
                    {"setting", "arrival_mode", "legal_status", "reason_for_visit", "safety_flags",
                     "source_of_information", "pathway", "visit_episode"});
        auto& v = g.visit_event;
        v.setting = r.str_or("setting", "");
        v.arrival_mode = r.str_or("arrival_mode", "");
        v.legal_status = r.str_or("legal_status", "");
        v.reason_for_visit = r.str_or("reason_for_visit", "");
        v.safety_flags = r.str_list("safety_flags");
        v.source_of_information = r.str_or("source_of_information", "");
        v.pathway = r.opt_str("pathway");
        v.visit_episode = r.str_or("visit_episode", "");
    }

    const Tree& rx = top.list("relations");
    for (std::size_t i = 0; i < rx.size(); ++i) {
        MapReader r(rx[i], item_path("relations", i), {"type", "source", "target"});
        const std::string type = r.str("type");
        const auto parsed = parse_relation_type(type);
        if (!parsed) throw ParseError(r.path("type"), "unknown relation type '" + type + "'");
        g.relations.push_back({*parsed, r.str("source"), r.str("target")});
    }

    const Tree& ux = top.list("durations");
    for (std::size_t i = 0; i < ux.size(); ++i) {
        MapReader r(ux[i], item_path("durations", i),
                    {"id", "offset_days", "span_days", "virtual", "age_anchored"});
        DurationInterval d;
        d.id = r.str("id");
        d.offset_days = r.integer("offset_days");
        d.span_days = r.integer("span_days");
        if (d.span_days < 0) throw ParseError(r.path("span_days"), "span_days < 0");
        d.is_virtual = r.boolean_or("virtual", false);
        d.age_anchored = r.boolean_or("age_anchored", false);
        g.durations.push_back(std::move(d));
    }
    return g;
}

std::string serialize_yaml(const SemanticGraph& g) {
    if (auto report = validate_graph(g); !report.empty()) throw InvalidGraphError(std::move(report));
    return yaml::emit(graph_to_tree(g), kFlowKeys);
}

SemanticGraph parse_yaml(std::string_view text) { return graph_from_tree(yaml::parse(text)); }

}  // namespace anonpsy
