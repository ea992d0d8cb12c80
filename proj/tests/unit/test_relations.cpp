#include <catch_amalgamated.hpp>

#include <algorithm>

#include "anonpsy/graph_yaml.hpp"
#include "anonpsy/relations.hpp"
#include "generators.hpp"

using namespace anonpsy;
namespace t = anonpsy::testing;

namespace {

SemanticGraph two_symptoms() {
    SemanticGraph g;
    g.diagnoses.push_back({"d_001", "Schizophrenia", {}});
    g.durations = {{"du_001", -3, 7}, {"du_002", -5, 5}};
    g.symptoms.push_back({"s_001", "voices", "", false, "", {}, {"du_001"}});
    g.symptoms.push_back({"s_002", "insomnia", "", false, "", {}, {"du_002"}});
    g.visit_event.visit_episode = "arrived";
    return g;
}

std::size_t count_type(const SemanticGraph& g, RelationType type) {
    return static_cast<std::size_t>(
        std::count_if(g.relations.begin(), g.relations.end(), [&](const Relation& r) { return r.type == type; }));
}

Gateway mock_gateway(std::shared_ptr<MockBackend> mock) {
    GatewayOptions opt;
    opt.retry = {1, std::chrono::milliseconds(0)};
    return Gateway(std::move(mock), opt);
}

}  // namespace

TEST_CASE("build_presents_with: edges follow day-0 coverage", "[relations]") {
    const auto g = build_presents_with(two_symptoms());
    REQUIRE(count_type(g, RelationType::presents_with) == 1);
    CHECK(std::find(g.relations.begin(), g.relations.end(),
                    Relation{RelationType::presents_with, std::string(kVisitEventId), "s_001"}) != g.relations.end());
    CHECK(build_presents_with(g) == g);

    auto none = two_symptoms();
    none.durations[0].span_days = 3;
    CHECK(count_type(build_presents_with(none), RelationType::presents_with) == 0);
}

TEST_CASE("build_presents_with: edge set equals current symptoms on random graphs", "[relations]") {
    t::TestRng rng(29);
    for (int i = 0; i < 50; ++i) {
        const auto g = t::random_canonical_graph(rng, false);
        const auto r = build_presents_with(g);
        std::set<std::string> targets;
        for (const auto& rel : r.relations)
            if (rel.type == RelationType::presents_with) targets.insert(rel.target);
        std::set<std::string> current;
        for (const auto& s : r.symptoms)
            if (s.current_symptom) current.insert(s.id);
        CHECK(targets == current);
        CHECK(validate_graph(r).empty());
    }
}

TEST_CASE("parse_etiologic_label: due-to and induced forms", "[relations]") {
    CHECK(parse_etiologic_label("psychotic disorder due to traumatic brain injury") ==
          EtiologicLabel{"traumatic brain injury", "psychotic disorder"});
    CHECK(parse_etiologic_label("steroid-induced psychosis") == EtiologicLabel{"steroid", "psychosis"});
    CHECK_FALSE(parse_etiologic_label("major depressive disorder").has_value());
}

TEST_CASE("link_etiology: anchoring and priority", "[relations]") {
    SemanticGraph g;
    g.diagnoses.push_back({"d_001", "Steroid-induced psychosis", {}});
    g.durations = {{"du_001", -20, 10}, {"du_002", -900, 30}};
    TreatmentNode tr;
    tr.id = "t_001";
    tr.treatment_type = "pharmacotherapy";
    tr.name = "prednisone (steroid)";
    tr.duration_ids = {"du_001"};
    g.treatments.push_back(tr);
    g.past_history.push_back({"ph_001", "steroid myopathy", {"du_002"}});
    g.symptoms.push_back({"s_001", "steroid cravings", "", false, "", {}, {"du_001"}});

    const auto linked = link_etiology(g);
    CHECK(count_type(linked, RelationType::induces) == 1);
    CHECK(std::find(linked.relations.begin(), linked.relations.end(),
                    Relation{RelationType::induces, "t_001", "d_001"}) != linked.relations.end());
    CHECK(validate_graph(linked).empty());

    auto no_anchor = g;
    no_anchor.diagnoses[0].label = "Alcohol-induced depressive disorder";
    const auto flagged = link_etiology(no_anchor);
    CHECK(count_type(flagged, RelationType::induces) == 0);
    const auto& flags = flagged.diagnoses[0].flags;
    CHECK(std::find(flags.begin(), flags.end(), kUnanchoredEtiology) != flags.end());
}

TEST_CASE("add_causal_edges_llm: evidence and legality gates", "[relations]") {
    auto g = two_symptoms();
    g.diagnoses.push_back({"d_002", "Insomnia disorder", {}});
    const std::string narrative = "His  voices began,\nand the insomnia was caused by the voices.";
    auto mock = std::make_shared<MockBackend>();
    mock->add("causal_pass", {{"case_id", "c"}, {"attempt", "0"}},
              R"({"edges": [
                   {"source_id": "s_001", "target_id": "d_002", "evidence": "the insomnia was caused by the voices"},
                   {"source_id": "s_002", "target_id": "d_001", "evidence": "insomnia made him hear things"},
                   {"source_id": "d_001", "target_id": "s_001", "evidence": "His voices began"},
                   {"source_id": "s_009", "target_id": "d_001", "evidence": "His voices began"}]})");
    auto gw = mock_gateway(mock);
    CausalPassLog log;
    const auto r = add_causal_edges_llm(g, narrative, gw, {{"case_id", "c"}}, 0.1, log);
    CHECK(r.relations == std::vector<Relation>{{RelationType::induces, "s_001", "d_002"}});
    CHECK(log.accepted.size() == 1);
    REQUIRE(log.rejected.size() == 3);
    CHECK(log.rejected[0].find("evidence") != std::string::npos);
    CHECK(log.rejected[1].find("illegal pair") != std::string::npos);
    CHECK(log.rejected[2].find("unknown node") != std::string::npos);

    CausalPassLog missing;
    const auto unchanged = add_causal_edges_llm(g, narrative, gw, {{"case_id", "other"}}, 0.1, missing);
    CHECK(unchanged == g);
    CHECK(missing.warnings.size() == 1);
}

TEST_CASE("filter_relations: drops illegal, dangling and repeated edges", "[relations]") {
    auto g = two_symptoms();
    g.relations = {{RelationType::manifests_as, "s_001", "d_001"},
                   {RelationType::manifests_as, "s_001", "d_001"},
                   {RelationType::manifests_as, "d_001", "s_001"},
                   {RelationType::treatment_of, "t_404", "d_001"}};
    std::vector<std::string> warnings;
    const auto r = filter_relations(g, warnings);
    CHECK(r.relations == std::vector<Relation>{{RelationType::manifests_as, "s_001", "d_001"}});
    CHECK(warnings.size() == 3);
}

TEST_CASE("check_consistency: detects temporal and relation drift", "[relations]") {
    const auto g = parse_yaml(t::read_file(t::fixture_dir() / "golden/case_001/graph.yaml"));
    CHECK(check_consistency(g, g).passed());

    auto shifted = g;
    const auto& target = shifted.treatments[0].duration_ids[0];
    for (auto& d : shifted.durations)
        if (d.id == target) d.offset_days += 1;
    const auto rep = check_consistency(g, shifted);
    REQUIRE_FALSE(rep.passed());
    CHECK(rep.discrepancies[0].find("t_001") != std::string::npos);

    auto dropped = g;
    dropped.relations.erase(std::find_if(dropped.relations.begin(), dropped.relations.end(),
                                         [](const Relation& r) { return r.type == RelationType::treatment_of; }));
    const auto rel = check_consistency(g, dropped);
    REQUIRE_FALSE(rel.passed());
    CHECK(rel.discrepancies[0].rfind("relation: missing", 0) == 0);
}
