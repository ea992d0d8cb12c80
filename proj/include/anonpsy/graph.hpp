#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace anonpsy {

using Day = std::int64_t;

/// Half-open day interval [offset_days, offset_days + span_days) relative to the index encounter.
struct DurationInterval {
    std::string id;
    Day offset_days = 0;
    Day span_days = 1;
    bool is_virtual = false;
    /// Anchored to the patient's age ("since age 15"); moves when the age is perturbed.
    bool age_anchored = false;

    Day start() const noexcept { return offset_days; }
    Day end() const noexcept { return offset_days + span_days; }
    bool covers(Day day) const noexcept { return start() <= day && day < end(); }

    bool operator==(const DurationInterval&) const = default;
};

enum class TimeUnit { day, week, month, year };

std::string_view to_string(TimeUnit unit);
std::optional<TimeUnit> parse_time_unit(std::string_view text);
Day days_per(TimeUnit unit);

/// Episode as extracted from text, before canonicalization into days.
struct RawEpisode {
    std::int64_t offset = 0;
    std::optional<std::int64_t> span;  // unresolved for ongoing episodes
    TimeUnit unit = TimeUnit::day;
    bool ongoing = false;
    bool inferred = false;
    bool age_anchored = false;

    bool operator==(const RawEpisode&) const = default;
};

struct StebContext {
    std::optional<std::string> situation;
    std::optional<std::string> thought;
    std::optional<std::string> emotion;
    std::optional<std::string> behavior;

    bool empty() const noexcept { return !situation && !thought && !emotion && !behavior; }
    bool operator==(const StebContext&) const = default;
};

enum class StebField { situation, thought, emotion, behavior };
inline constexpr StebField kStebFields[] = {StebField::situation, StebField::thought,
                                            StebField::emotion, StebField::behavior};
std::string_view to_string(StebField field);
const std::optional<std::string>& field(const StebContext& ctx, StebField f);
std::optional<std::string>& field(StebContext& ctx, StebField f);
std::vector<StebField> present_fields(const StebContext& ctx);

struct SymptomNode {
    std::string id;
    std::string symptom;
    std::string pattern;
    bool current_symptom = false;
    std::string evidence_text;
    std::vector<StebContext> contexts;
    std::vector<std::string> duration_ids;

    bool operator==(const SymptomNode&) const = default;
};

struct DiagnosisNode {
    std::string id;
    std::string label;
    std::vector<std::string> flags;

    bool operator==(const DiagnosisNode&) const = default;
};

inline constexpr std::string_view kRouteVocabulary[] = {
    "oral", "intravenous", "intramuscular", "subcutaneous", "topical", "inhaled", "other"};
bool is_known_route(std::string_view route);

struct TreatmentNode {
    std::string id;
    std::string treatment_type;
    std::string name;
    std::optional<std::string> dose;
    std::optional<std::string> route;
    std::optional<std::string> frequency;
    std::optional<std::string> outcome;
    std::vector<std::string> duration_ids;

    bool operator==(const TreatmentNode&) const = default;
};

struct PastHistoryNode {
    std::string id;
    std::string condition;
    std::vector<std::string> duration_ids;

    bool operator==(const PastHistoryNode&) const = default;
};

inline constexpr std::string_view kVisitEventId = "visit_event";

struct VisitEvent {
    std::string setting;
    std::string arrival_mode;
    std::string legal_status;
    std::string reason_for_visit;
    std::vector<std::string> safety_flags;
    std::string source_of_information;
    std::optional<std::string> pathway;
    std::string visit_episode;

    bool operator==(const VisitEvent&) const = default;
};

enum class RelationType { manifests_as, treatment_of, presents_with, induces };
std::string_view to_string(RelationType type);
std::optional<RelationType> parse_relation_type(std::string_view text);

struct Relation {
    RelationType type = RelationType::manifests_as;
    std::string source;
    std::string target;

    auto operator<=>(const Relation&) const = default;
};

struct Demographics {
    std::int64_t age = 0;
    std::string sex;
    std::string ethnicity;
    std::string occupation;
    std::string family_structure;

    bool operator==(const Demographics&) const = default;
};

struct FamilyHistoryEntry {
    std::string member;
    std::string condition;
    std::string evidence_text;

    bool operator==(const FamilyHistoryEntry&) const = default;
};

struct TestResults {
    std::string labs;
    std::string imaging;
    std::string mental_status;
    std::string other;

    bool operator==(const TestResults&) const = default;
};

struct CaseAttributes {
    Demographics demographics;
    std::vector<FamilyHistoryEntry> family_history;
    TestResults test_results;

    bool operator==(const CaseAttributes&) const = default;
};

enum class NodeType { diagnosis, symptom, treatment, past_history, visit_event };
std::string_view to_string(NodeType type);

/// Typed semantic graph of one case. Equality ignores the order of node, relation and duration
/// lists (they are sets keyed by id); per-node lists keep their order.
struct SemanticGraph {
    CaseAttributes attributes;
    std::vector<DiagnosisNode> diagnoses;
    std::vector<SymptomNode> symptoms;
    std::vector<TreatmentNode> treatments;
    std::vector<PastHistoryNode> past_history;
    VisitEvent visit_event;
    std::vector<Relation> relations;
    std::vector<DurationInterval> durations;

    const DurationInterval* find_duration(std::string_view id) const;
    const SymptomNode* find_symptom(std::string_view id) const;
    const TreatmentNode* find_treatment(std::string_view id) const;
    const PastHistoryNode* find_past_history(std::string_view id) const;
    const DiagnosisNode* find_diagnosis(std::string_view id) const;
    std::optional<NodeType> type_of(std::string_view id) const;

    /// Sorts nodes, durations and relations into the canonical (serialization) order.
    void sort_canonical();

    friend bool operator==(const SemanticGraph& a, const SemanticGraph& b);
};

/// Allowed (relation, source type, target type) triples.
bool is_allowed_pair(RelationType type, NodeType source, NodeType target);

/// Duration ids referenced by any node with intervals (symptom, treatment, past history).
const std::vector<std::string>* duration_refs(const SemanticGraph& g, std::string_view node_id);

struct Violation {
    std::string code;
    std::string path;
    std::string message;

    bool operator==(const Violation&) const = default;
};

using ValidationReport = std::vector<Violation>;

/// Schema violations: dangling ids, illegal or duplicate relations, bad routes, empty labels,
/// malformed durations and STEB frames. Empty report means valid.
ValidationReport validate_graph(const SemanticGraph& g);

/// Additional invariants of a fully canonicalized graph (one interval per symptom, disjoint
/// intervals per node, currency flags match day-0 coverage, no unreferenced durations).
ValidationReport validate_canonical(const SemanticGraph& g);

std::string format_report(const ValidationReport& report);

}  // namespace anonpsy
