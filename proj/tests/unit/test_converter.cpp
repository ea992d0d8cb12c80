#include <catch_amalgamated.hpp>

#include <algorithm>

#include "anonpsy/converter.hpp"
#include "anonpsy/graph_yaml.hpp"
#include "anonpsy/pipeline.hpp"
#include "anonpsy/temporal.hpp"
#include "anonpsy/text.hpp"
#include "generators.hpp"

using namespace anonpsy;
namespace t = anonpsy::testing;

namespace {

GatewayOptions quick() {
    GatewayOptions opt;
    opt.retry = {1, std::chrono::milliseconds(0)};
    return opt;
}

CaseNarrative fixture_case(const std::string& id) {
    for (const auto& c : load_corpus(t::fixture_dir() / "corpus"))
        if (c.case_id == id) return read_case(c);
    FAIL("no fixture case " << id);
    return {};
}

const char* kSmallNarrative =
    "Ann, 40, came to the clinic. Two weeks before admission she stopped sleeping. She takes lorazepam.";

/// A one-symptom case with a scripted entity reply.
std::shared_ptr<MockBackend> small_case(const std::string& entities, const std::string& episodes) {
    auto mock = std::make_shared<MockBackend>();
    mock->add("extract_entities", {{"case_id", "small"}, {"attempt", "0"}}, entities);
    mock->add("extract_episodes", {{"case_id", "small"}, {"attempt", "0"}}, episodes);
    mock->add("causal_pass", {{"case_id", "small"}, {"attempt", "0"}}, R"({"edges": []})");
    return mock;
}

std::string entities_json(const std::string& treatments, const std::string& visit, const std::string& symptoms =
    R"([{"id": "s_001", "symptom": "insomnia", "pattern": "", "current_symptom": true,
        "evidence_text": "she stopped sleeping", "contexts": [{"behavior": "stayed awake"}]}])") {
    return R"({"demographics": {"age": 40, "sex": "female", "ethnicity": "", "occupation": "teacher",
               "family_structure": ""},
              "family_history": [], "test_results": {"labs": "", "imaging": "", "mental_status": "", "other": ""},
              "symptoms": )" + symptoms + R"(,
              "treatments": )" + treatments + R"(,
              "past_history": [],
              "visit_event": )" + visit + R"(,
              "relations": []})";
}

const char* kVisit = R"({"setting": "outpatient clinic", "arrival_mode": "self", "legal_status": "voluntary",
    "reason_for_visit": "insomnia", "safety_flags": [], "source_of_information": "patient", "pathway": null,
    "visit_episode": "She came to the clinic."})";

CaseNarrative small_narrative() { return {"small", kSmallNarrative, {"Insomnia disorder"}}; }

}  // namespace

TEST_CASE("convert: fixture cases match the golden graphs", "[converter]") {
    for (const std::string id : {"case_001", "case_002", "case_003"}) {
        Gateway gw(t::fixture_backend(), quick());
        ConvertLog log;
        const auto g = convert(fixture_case(id), gw, {}, log);
        CHECK(serialize_yaml(g) == t::read_file(t::fixture_dir() / "golden" / id / "graph.yaml"));
        CHECK(validate_canonical(g).empty());
        CHECK(canonicalize_timeline(g) == g);

        const auto narrative = text::to_lower(text::normalize_ws(fixture_case(id).text));
        for (const auto& s : g.symptoms)
            CHECK(narrative.find(text::to_lower(text::normalize_ws(s.evidence_text))) != std::string::npos);

        ConvertLog again;
        CHECK(serialize_yaml(convert(fixture_case(id), gw, {}, again)) == serialize_yaml(g));
    }
}

TEST_CASE("convert: stage sink receives every intermediate", "[converter]") {
    Gateway gw(t::fixture_backend(), quick());
    ConvertLog log;
    std::vector<std::string> stages;
    convert(fixture_case("case_003"), gw, {}, log, [&](const std::string& name, const std::string& yaml) {
        stages.push_back(name);
        CHECK_FALSE(yaml.empty());
    });
    CHECK(stages.size() == 3);
}

TEST_CASE("extract_entities: route vocabulary and single visit", "[converter]") {
    const auto tr = R"([{"id": "t_001", "treatment_type": "pharmacotherapy", "name": "lorazepam", "dose": "1 mg",
                        "route": "sublingual-ish", "frequency": null, "outcome": null}])";
    const auto visits = std::string("[") + kVisit + R"(, {"setting": "inpatient unit", "arrival_mode": "police",
        "legal_status": "involuntary", "reason_for_visit": "x", "safety_flags": [], "source_of_information": "x",
        "pathway": null, "visit_episode": "x"}])";
    auto mock = small_case(entities_json(tr, visits), R"({"episodes": []})");
    Gateway gw(mock, quick());
    ConvertLog log;
    const auto draft = extract_entities(small_narrative(), gw, {}, log);
    REQUIRE(draft.graph.treatments.size() == 1);
    CHECK_FALSE(draft.graph.treatments[0].route.has_value());
    CHECK(draft.graph.visit_event.setting == "outpatient clinic");
    const auto has = [&](const std::string& needle) {
        return std::any_of(log.warnings.begin(), log.warnings.end(),
                           [&](const std::string& w) { return w.find(needle) != std::string::npos; });
    };
    CHECK(has("sublingual-ish"));
    CHECK(has("rejected additional visit event"));
    REQUIRE(draft.graph.diagnoses.size() == 1);
    CHECK(draft.graph.diagnoses[0].id == "d_001");
    CHECK(draft.graph.diagnoses[0].label == "Insomnia disorder");
}

TEST_CASE("extract_episodes: units, ongoing episodes and rejects", "[converter]") {
    const auto episodes = R"({"episodes": [
        {"node_id": "s_001", "offset": -2, "span": 2, "unit": "week", "ongoing": false, "inferred": false},
        {"node_id": "t_001", "offset": -1, "unit": "fortnight", "ongoing": false, "inferred": false}]})";
    const auto tr = R"([{"id": "t_001", "treatment_type": "pharmacotherapy", "name": "lorazepam"}])";
    auto mock = small_case(entities_json(tr, kVisit), episodes);
    Gateway gw(mock, quick());
    ConvertLog log;
    auto draft = extract_entities(small_narrative(), gw, {}, log);
    extract_episodes(small_narrative(), draft, gw, {}, log);
    REQUIRE(draft.episodes.at("s_001").size() == 1);
    const auto& e = draft.episodes.at("s_001")[0];
    CHECK(e.offset == -2);
    CHECK(e.span == 2);
    CHECK(e.unit == TimeUnit::week);
    CHECK(std::any_of(log.flags.begin(), log.flags.end(),
                      [](const std::string& f) { return f.find("fortnight") != std::string::npos; }));
    // the treatment lost its only episode and gets the inferred day-0 default
    REQUIRE(draft.episodes.at("t_001").size() == 1);
    CHECK(draft.episodes.at("t_001")[0].inferred);
    CHECK(draft.episodes.at("t_001")[0].ongoing);

    const auto g = build_timeline(draft, log);
    CHECK(t::node_intervals(g, "s_001") == std::vector<std::pair<Day, Day>>{{-14, 0}});
    CHECK_FALSE(g.find_symptom("s_001")->current_symptom);
}

TEST_CASE("convert: ongoing span resolved by horizon", "[converter]") {
    const auto episodes = R"({"episodes": [
        {"node_id": "s_001", "offset": -30, "unit": "day", "ongoing": true, "inferred": false},
        {"node_id": "t_001", "offset": 0, "span": 5, "unit": "day", "ongoing": false, "inferred": false}]})";
    const auto tr = R"([{"id": "t_001", "treatment_type": "pharmacotherapy", "name": "lorazepam"}])";
    Gateway gw(small_case(entities_json(tr, kVisit), episodes), quick());
    ConvertLog log;
    const auto g = convert(small_narrative(), gw, {}, log);
    CHECK(t::node_intervals(g, "s_001") == std::vector<std::pair<Day, Day>>{{-30, 5}});
    CHECK(g.find_symptom("s_001")->current_symptom);
}

TEST_CASE("convert: zero symptoms gives a valid graph without presentation edges", "[converter]") {
    Gateway gw(small_case(entities_json("[]", kVisit, "[]"), R"({"episodes": []})"), quick());
    ConvertLog log;
    const auto g = convert(small_narrative(), gw, {}, log);
    CHECK(g.symptoms.empty());
    CHECK(validate_graph(g).empty());
    CHECK(std::none_of(g.relations.begin(), g.relations.end(),
                       [](const Relation& r) { return r.type == RelationType::presents_with; }));
}

TEST_CASE("convert: gateway failure raises a stage error with the trail", "[converter]") {
    auto mock = std::make_shared<MockBackend>();
    mock->add("extract_entities", {{"case_id", "small"}, {"attempt", "0"}}, entities_json("[]", kVisit));
    Gateway gw(mock, quick());
    ConvertLog log;
    try {
        convert(small_narrative(), gw, {}, log);
        FAIL("missing episode fixture accepted");
    } catch (const StageError& e) {
        REQUIRE_FALSE(e.trail().empty());
        CHECK(e.trail().back().find("episodes") != std::string::npos);
    }
}
