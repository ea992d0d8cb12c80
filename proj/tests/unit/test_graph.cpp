#include <catch_amalgamated.hpp>

#include <algorithm>
#include <set>
#include <tuple>

#include "anonpsy/error.hpp"
#include "anonpsy/graph.hpp"
#include "anonpsy/graph_yaml.hpp"
#include "generators.hpp"

using namespace anonpsy;
namespace t = anonpsy::testing;

namespace {

SemanticGraph golden_graph() { return parse_yaml(t::read_file(t::fixture_dir() / "golden/case_001/graph.yaml")); }

bool has_code(const ValidationReport& r, const std::string& code) {
    return std::any_of(r.begin(), r.end(), [&](const Violation& v) { return v.code == code; });
}

}  // namespace

TEST_CASE("validate_graph: golden graph is clean", "[graph]") {
    const auto g = golden_graph();
    CHECK(validate_graph(g).empty());
    CHECK(validate_canonical(g).empty());
}

TEST_CASE("validate_graph: illegal pair and dangling duration", "[graph]") {
    auto g = golden_graph();
    g.relations.push_back({RelationType::manifests_as, "d_001", "s_001"});
    CHECK(has_code(validate_graph(g), "illegal pair"));

    g = golden_graph();
    g.symptoms[0].duration_ids.push_back("du_999");
    CHECK(has_code(validate_graph(g), "dangling duration"));

    g = golden_graph();
    g.treatments[0].route = "sublingual-ish";
    CHECK(has_code(validate_graph(g), "unknown route"));
}

TEST_CASE("allowed-pair table is exactly the documented set", "[graph]") {
    const NodeType all[] = {NodeType::diagnosis, NodeType::symptom, NodeType::treatment, NodeType::past_history,
                            NodeType::visit_event};
    using R = RelationType;
    using N = NodeType;
    const std::set<std::tuple<R, N, N>> allowed = {
        {R::manifests_as, N::symptom, N::diagnosis},
        {R::treatment_of, N::treatment, N::diagnosis},
        {R::treatment_of, N::treatment, N::past_history},
        {R::treatment_of, N::treatment, N::symptom},
        {R::presents_with, N::visit_event, N::symptom},
        {R::induces, N::symptom, N::diagnosis},
        {R::induces, N::treatment, N::diagnosis},
        {R::induces, N::past_history, N::diagnosis},
    };
    for (auto r : {R::manifests_as, R::treatment_of, R::presents_with, R::induces})
        for (auto s : all)
            for (auto d : all) CHECK(is_allowed_pair(r, s, d) == (allowed.count({r, s, d}) > 0));
}

TEST_CASE("serialize_yaml: golden bytes and listing layout", "[graph]") {
    const std::string golden = t::read_file(t::fixture_dir() / "golden/case_001/graph.yaml");
    CHECK(serialize_yaml(parse_yaml(golden)) == golden);

    // Symptom entries follow the id / symptom / pattern / current_symptom / evidence_text / contexts /
    // duration_ids layout, with duration ids in flow style.
    const auto pos = golden.find("  - id: s_001\n");
    REQUIRE(pos != std::string::npos);
    const std::string keys[] = {"    symptom: ", "    pattern: ", "    current_symptom: ", "    evidence_text: ",
                                "    contexts:\n", "    duration_ids: ["};
    std::size_t at = pos;
    for (const auto& k : keys) {
        const auto next = golden.find(k, at);
        REQUIRE(next != std::string::npos);
        at = next;
    }
    CHECK(golden.find("  - id: s_002\n") > at);
}

TEST_CASE("serialize_yaml: permuted equal graphs give equal bytes", "[graph]") {
    t::TestRng rng(3);
    for (int i = 0; i < 20; ++i) {
        const auto g = t::random_canonical_graph(rng);
        auto h = g;
        std::shuffle(h.symptoms.begin(), h.symptoms.end(), rng);
        std::shuffle(h.relations.begin(), h.relations.end(), rng);
        std::shuffle(h.durations.begin(), h.durations.end(), rng);
        CHECK(h == g);
        CHECK(serialize_yaml(h) == serialize_yaml(g));
    }
}

TEST_CASE("parse_yaml: round trip on random graphs with awkward strings", "[graph]") {
    t::TestRng rng(5);
    for (int i = 0; i < 60; ++i) {
        const auto g = t::random_canonical_graph(rng, true);
        const auto text = serialize_yaml(g);
        const auto back = parse_yaml(text);
        CHECK(back == g);
        CHECK(serialize_yaml(back) == text);
    }
}

TEST_CASE("parse_yaml: errors name the offending path", "[graph]") {
    std::string text = t::read_file(t::fixture_dir() / "golden/case_001/graph.yaml");
    auto bad = text;
    bad.replace(bad.find("\nsymptoms:"), 10, "\nsymptomz:");
    try {
        parse_yaml(bad);
        FAIL("unknown key accepted");
    } catch (const ParseError& e) {
        CHECK(e.path() == "symptomz");
    }

    bad = text;
    const auto span = bad.find("span_days: ");
    bad.replace(span, bad.find('\n', span) - span, "span_days: -3");
    try {
        parse_yaml(bad);
        FAIL("negative span accepted");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("span_days < 0") != std::string::npos);
        CHECK(e.path().find("durations[0]") != std::string::npos);
    }

    CHECK_THROWS_AS(parse_yaml("demographics: [1, 2"), ParseError);
}

TEST_CASE("serialize_yaml: refuses invalid graphs", "[graph]") {
    auto g = golden_graph();
    g.relations.push_back({RelationType::induces, "d_001", "d_002"});
    CHECK_THROWS_AS(serialize_yaml(g), InvalidGraphError);
}
