#include "anonpsy/graph.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <utility>

namespace anonpsy {

std::string_view to_string(TimeUnit unit) {
    switch (unit) {
        case TimeUnit::day: return "day";
        case TimeUnit::week: return "week";
        case TimeUnit::month: return "month";
        case TimeUnit::year: return "year";
    }
    return "day";
}

std::optional<TimeUnit> parse_time_unit(std::string_view text) {
    if (text == "day") return TimeUnit::day;
    if (text == "week") return TimeUnit::week;
    if (text == "month") return TimeUnit::month;
    if (text == "year") return TimeUnit::year;
    return std::nullopt;
}

Day days_per(TimeUnit unit) {
    switch (unit) {
        case TimeUnit::day: return 1;
        case TimeUnit::week: return 7;
        case TimeUnit::month: return 30;
        case TimeUnit::year: return 365;
    }
    return 1;
}

std::string_view to_string(StebField f) {
    switch (f) {
        case StebField::situation: return "situation";
        case StebField::thought: return "thought";
        case StebField::emotion: return "emotion";
        case StebField::behavior: return "behavior";
    }
    return "situation";
}

const std::optional<std::string>& field(const StebContext& ctx, StebField f) {
    switch (f) {
        case StebField::situation: return ctx.situation;
        case StebField::thought: return ctx.thought;
        case StebField::emotion: return ctx.emotion;
        case StebField::behavior: return ctx.behavior;
    }
    return ctx.situation;
}

std::optional<std::string>& field(StebContext& ctx, StebField f) {
    return const_cast<std::optional<std::string>&>(field(std::as_const(ctx), f));
}

std::vector<StebField> present_fields(const StebContext& ctx) {
    std::vector<StebField> out;
    for (StebField f : kStebFields)
        if (field(ctx, f)) out.push_back(f);
    return out;
}

bool is_known_route(std::string_view route) {
    return std::find(std::begin(kRouteVocabulary), std::end(kRouteVocabulary), route) !=
           std::end(kRouteVocabulary);
}

std::string_view to_string(RelationType type) {
    switch (type) {
        case RelationType::manifests_as: return "MANIFESTS_AS";
        case RelationType::treatment_of: return "TREATMENT_OF";
        case RelationType::presents_with: return "PRESENTS_WITH";
        case RelationType::induces: return "INDUCES";
    }
    return "MANIFESTS_AS";
}

std::optional<RelationType> parse_relation_type(std::string_view text) {
    if (text == "MANIFESTS_AS") return RelationType::manifests_as;
    if (text == "TREATMENT_OF") return RelationType::treatment_of;
    if (text == "PRESENTS_WITH") return RelationType::presents_with;
    if (text == "INDUCES") return RelationType::induces;
    return std::nullopt;
}

std::string_view to_string(NodeType type) {
    switch (type) {
        case NodeType::diagnosis: return "diagnosis";
        case NodeType::symptom: return "symptom";
        case NodeType::treatment: return "treatment";
        case NodeType::past_history: return "past_history";
        case NodeType::visit_event: return "visit_event";
    }
    return "diagnosis";
}

bool is_allowed_pair(RelationType type, NodeType source, NodeType target) {
    switch (type) {
        case RelationType::manifests_as:
            return source == NodeType::symptom && target == NodeType::diagnosis;
        case RelationType::treatment_of:
            return source == NodeType::treatment &&
                   (target == NodeType::diagnosis || target == NodeType::past_history ||
                    target == NodeType::symptom);
        case RelationType::presents_with:
            return source == NodeType::visit_event && target == NodeType::symptom;
        case RelationType::induces:
            return (source == NodeType::symptom || source == NodeType::treatment ||
                    source == NodeType::past_history) &&
                   target == NodeType::diagnosis;
    }
    return false;
}

namespace {

template <class Node>
const Node* find_by_id(const std::vector<Node>& nodes, std::string_view id) {
    auto it = std::find_if(nodes.begin(), nodes.end(), [&](const Node& n) { return n.id == id; });
    return it == nodes.end() ? nullptr : &*it;
}

template <class Node>
void sort_by_id(std::vector<Node>& nodes) {
    std::sort(nodes.begin(), nodes.end(), [](const Node& a, const Node& b) { return a.id < b.id; });
}

}  // namespace

const DurationInterval* SemanticGraph::find_duration(std::string_view id) const {
    return find_by_id(durations, id);
}
const SymptomNode* SemanticGraph::find_symptom(std::string_view id) const {
    return find_by_id(symptoms, id);
}
const TreatmentNode* SemanticGraph::find_treatment(std::string_view id) const {
    return find_by_id(treatments, id);
}
const PastHistoryNode* SemanticGraph::find_past_history(std::string_view id) const {
    return find_by_id(past_history, id);
}
const DiagnosisNode* SemanticGraph::find_diagnosis(std::string_view id) const {
    return find_by_id(diagnoses, id);
}

std::optional<NodeType> SemanticGraph::type_of(std::string_view id) const {
    if (id == kVisitEventId) return NodeType::visit_event;
    if (find_diagnosis(id)) return NodeType::diagnosis;
    if (find_symptom(id)) return NodeType::symptom;
    if (find_treatment(id)) return NodeType::treatment;
    if (find_past_history(id)) return NodeType::past_history;
    return std::nullopt;
}

void SemanticGraph::sort_canonical() {
    sort_by_id(diagnoses);
    sort_by_id(symptoms);
    sort_by_id(treatments);
    sort_by_id(past_history);
    sort_by_id(durations);
    std::sort(relations.begin(), relations.end());
}

bool operator==(const SemanticGraph& a, const SemanticGraph& b) {
    SemanticGraph x = a;
    SemanticGraph y = b;
    x.sort_canonical();
    y.sort_canonical();
    return x.attributes == y.attributes && x.diagnoses == y.diagnoses && x.symptoms == y.symptoms &&
           x.treatments == y.treatments && x.past_history == y.past_history &&
           x.visit_event == y.visit_event && x.relations == y.relations &&
           x.durations == y.durations;
}

const std::vector<std::string>* duration_refs(const SemanticGraph& g, std::string_view node_id) {
    if (const auto* s = g.find_symptom(node_id)) return &s->duration_ids;
    if (const auto* t = g.find_treatment(node_id)) return &t->duration_ids;
    if (const auto* p = g.find_past_history(node_id)) return &p->duration_ids;
    return nullptr;
}

namespace {

struct Validator {
    const SemanticGraph& g;
    ValidationReport report;
    std::set<std::string> seen_ids;

    void add(std::string code, std::string path, std::string message) {
        report.push_back({std::move(code), std::move(path), std::move(message)});
    }

    void check_id(const std::string& id, const std::string& path) {
        if (id.empty()) {
            add("empty id", path, "node id is empty");
        } else if (id == kVisitEventId) {
            add("duplicate id", path, "id '" + id + "' is reserved for the visit event");
        } else if (!seen_ids.insert(id).second) {
            add("duplicate id", path, "id '" + id + "' is used more than once");
        }
    }

    void check_durations(const std::vector<std::string>& ids, const std::string& path) {
        std::set<std::string> local;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const std::string p = path + ".duration_ids[" + std::to_string(i) + "]";
            if (!g.find_duration(ids[i]))
                add("dangling duration", p, "duration '" + ids[i] + "' is not in the pool");
            if (!local.insert(ids[i]).second)
                add("duplicate duration reference", p, "duration '" + ids[i] + "' referenced twice");
        }
    }

    void run() {
        if (g.attributes.demographics.age < 0)
            add("negative age", "demographics.age", "age must be >= 0");

        std::set<std::string> duration_ids;
        for (std::size_t i = 0; i < g.durations.size(); ++i) {
            const auto& d = g.durations[i];
            const std::string p = "durations[" + std::to_string(i) + "]";
            if (d.id.empty()) add("empty id", p, "duration id is empty");
            if (!duration_ids.insert(d.id).second)
                add("duplicate duration id", p, "duration id '" + d.id + "' is used more than once");
            if (d.span_days < 1) add("empty interval", p, "span_days must be >= 1");
        }

        for (std::size_t i = 0; i < g.diagnoses.size(); ++i) {
            const auto& d = g.diagnoses[i];
            const std::string p = "diagnoses[" + std::to_string(i) + "]";
            check_id(d.id, p);
            if (d.label.empty()) add("empty label", p + ".label", "diagnosis label is empty");
        }
        for (std::size_t i = 0; i < g.symptoms.size(); ++i) {
            const auto& s = g.symptoms[i];
            const std::string p = "symptoms[" + std::to_string(i) + "]";
            check_id(s.id, p);
            if (s.symptom.empty()) add("empty label", p + ".symptom", "symptom headword is empty");
            for (std::size_t c = 0; c < s.contexts.size(); ++c)
                if (s.contexts[c].empty())
                    add("empty context", p + ".contexts[" + std::to_string(c) + "]",
                        "STEB frame has no fields");
            check_durations(s.duration_ids, p);
        }
        for (std::size_t i = 0; i < g.treatments.size(); ++i) {
            const auto& t = g.treatments[i];
            const std::string p = "treatments[" + std::to_string(i) + "]";
            check_id(t.id, p);
            if (t.route && !is_known_route(*t.route))
                add("unknown route", p + ".route", "route '" + *t.route + "' is not in the vocabulary");
            check_durations(t.duration_ids, p);
        }
        for (std::size_t i = 0; i < g.past_history.size(); ++i) {
            const auto& h = g.past_history[i];
            const std::string p = "past_history[" + std::to_string(i) + "]";
            check_id(h.id, p);
            if (h.condition.empty()) add("empty label", p + ".condition", "condition is empty");
            check_durations(h.duration_ids, p);
        }

        std::set<Relation> seen_relations;
        for (std::size_t i = 0; i < g.relations.size(); ++i) {
            const auto& r = g.relations[i];
            const std::string p = "relations[" + std::to_string(i) + "]";
            const auto src = g.type_of(r.source);
            const auto dst = g.type_of(r.target);
            if (!src) add("dangling node", p + ".source", "node '" + r.source + "' does not exist");
            if (!dst) add("dangling node", p + ".target", "node '" + r.target + "' does not exist");
            if (src && dst && !is_allowed_pair(r.type, *src, *dst))
                add("illegal pair", p,
                    std::string(to_string(r.type)) + " from " + std::string(to_string(*src)) +
                        " to " + std::string(to_string(*dst)) + " is not allowed");
            if (!seen_relations.insert(r).second)
                add("duplicate relation", p, "relation repeated");
        }
    }
};

}  // namespace

ValidationReport validate_graph(const SemanticGraph& g) {
    Validator v{g, {}, {}};
    v.run();
    return std::move(v.report);
}

ValidationReport validate_canonical(const SemanticGraph& g) {
    ValidationReport report;
    std::set<std::string> referenced;

    auto check_node = [&](const std::string& id, const std::vector<std::string>& ids,
                          const std::string& path) {
        std::vector<const DurationInterval*> iv;
        for (const auto& d : ids) {
            referenced.insert(d);
            if (const auto* p = g.find_duration(d)) iv.push_back(p);
        }
        std::sort(iv.begin(), iv.end(),
                  [](const auto* a, const auto* b) { return a->start() < b->start(); });
        for (std::size_t i = 1; i < iv.size(); ++i)
            if (iv[i]->start() <= iv[i - 1]->end())
                report.push_back({"unreconciled intervals", path,
                                  "node '" + id + "' has overlapping or adjacent intervals"});
    };

    for (std::size_t i = 0; i < g.symptoms.size(); ++i) {
        const auto& s = g.symptoms[i];
        const std::string p = "symptoms[" + std::to_string(i) + "]";
        if (s.duration_ids.size() != 1)
            report.push_back({"episode count", p, "symptom '" + s.id + "' must reference exactly one duration"});
        check_node(s.id, s.duration_ids, p);
        bool covers = false;
        for (const auto& d : s.duration_ids)
            if (const auto* iv = g.find_duration(d); iv && iv->covers(0)) covers = true;
        if (covers != s.current_symptom)
            report.push_back({"currency mismatch", p + ".current_symptom",
                              "current_symptom disagrees with day-0 coverage"});
    }
    for (std::size_t i = 0; i < g.treatments.size(); ++i)
        check_node(g.treatments[i].id, g.treatments[i].duration_ids,
                   "treatments[" + std::to_string(i) + "]");
    for (std::size_t i = 0; i < g.past_history.size(); ++i)
        check_node(g.past_history[i].id, g.past_history[i].duration_ids,
                   "past_history[" + std::to_string(i) + "]");
    for (std::size_t i = 0; i < g.durations.size(); ++i)
        if (!referenced.count(g.durations[i].id))
            report.push_back({"unreferenced duration", "durations[" + std::to_string(i) + "]",
                              "duration '" + g.durations[i].id + "' is not referenced"});
    return report;
}

std::string format_report(const ValidationReport& report) {
    std::ostringstream os;
    for (const auto& v : report) os << v.code << " at " << v.path << ": " << v.message << '\n';
    return os.str();
}

}  // namespace anonpsy
