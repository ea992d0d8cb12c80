#include <catch_amalgamated.hpp>

#include <algorithm>
#include <set>

#include "anonpsy/graph_yaml.hpp"
#include "anonpsy/perturber.hpp"
#include "anonpsy/temporal.hpp"
#include "generators.hpp"

using namespace anonpsy;
namespace t = anonpsy::testing;

namespace {

GatewayOptions quick() {
    GatewayOptions opt;
    opt.retry = {1, std::chrono::milliseconds(0)};
    return opt;
}

SemanticGraph golden(const std::string& id, const std::string& file = "graph.yaml") {
    return parse_yaml(t::read_file(t::fixture_dir() / "golden" / id / file));
}

const PerturbData& shipped() {
    static const PerturbData data = load_perturb_data(t::data_dir());
    return data;
}

SemanticGraph with_diagnosis(const std::string& label, std::int64_t age) {
    SemanticGraph g;
    g.attributes.demographics = {age, "male", "", "", ""};
    g.diagnoses.push_back({"d_001", label, {}});
    g.visit_event.visit_episode = "came in";
    return g;
}

bool contains(const std::vector<std::string>& items, const std::string& needle) {
    return std::any_of(items.begin(), items.end(), [&](const std::string& s) { return s.find(needle) != std::string::npos; });
}

PerturbConfig trigram_cfg() {
    PerturbConfig cfg;
    cfg.similarity = SimilarityBackend::trigram;
    cfg.max_retries = 1;
    return cfg;
}

}  // namespace

TEST_CASE("perturb_age: antisocial personality disorder at 19", "[perturber]") {
    const auto g = with_diagnosis("Antisocial personality disorder", 19);
    CHECK(contains(feasibility_violations(g, shipped().rules, -2), "requires age >= 18"));
    CHECK(contains(feasibility_violations(g, shipped().rules, -3), "requires age >= 18"));
    CHECK(feasibility_violations(g, shipped().rules, -1).empty());

    const std::set<std::int64_t> allowed = {-1, 1, 2, 3};
    std::set<std::int64_t> seen;
    for (std::int64_t seed = 0; seed < 200; ++seed) {
        Rng rng = case_rng(seed, "aspd");
        PerturbAudit audit;
        const auto r = perturb_age(g, {}, shipped().rules, rng, audit);
        CHECK(allowed.count(r.offset) == 1);
        CHECK(r.new_age == 19 + r.offset);
        seen.insert(r.offset);
        for (const auto& d : audit.age_draws)
            if (d.offset <= -2) CHECK(d.verdict.find("requires age >= 18") != std::string::npos);
    }
    CHECK(seen == allowed);
}

TEST_CASE("perturb_age: unconstrained offsets cover the bound", "[perturber]") {
    const auto g = with_diagnosis("Panic disorder", 40);
    std::set<std::int64_t> seen;
    for (std::int64_t seed = 0; seed < 200; ++seed) {
        Rng rng = case_rng(seed, "x");
        PerturbAudit audit;
        const auto r = perturb_age(g, {}, shipped().rules, rng, audit);
        CHECK(audit.age_draws.size() == 1);
        seen.insert(r.offset);
    }
    CHECK(seen == std::set<std::int64_t>{-3, -2, -1, 1, 2, 3});
}

TEST_CASE("perturb_age: infeasible everywhere keeps the age", "[perturber]") {
    const auto g = with_diagnosis("Antisocial personality disorder", 10);
    Rng rng = case_rng(1, "x");
    PerturbAudit audit;
    const auto r = perturb_age(g, {}, shipped().rules, rng, audit);
    CHECK(r.offset == 0);
    CHECK(r.new_age == 10);
    CHECK(contains(audit.flags, "no feasible offset"));
}

TEST_CASE("perturb_age: childhood-onset rule uses linked intervals", "[perturber]") {
    auto g = with_diagnosis("Attention-deficit/hyperactivity disorder", 13);
    g.durations = {{"du_001", -3 * 365, 3 * 365 + 1}};
    g.symptoms.push_back({"s_001", "inattention", "", true, "", {}, {"du_001"}});
    g.relations.push_back({RelationType::manifests_as, "s_001", "d_001"});
    // onset is age + offset - 3; it must stay below 12
    CHECK(feasibility_violations(g, shipped().rules, 1).empty());
    CHECK(contains(feasibility_violations(g, shipped().rules, 2), "onset before age 12"));
}

TEST_CASE("perturb_age: seed 42 on the fixture case", "[perturber]") {
    Rng rng = case_rng(42, "case_001");
    PerturbAudit audit;
    const auto r = perturb_age(golden("case_001"), {}, shipped().rules, rng, audit);
    CHECK(r.offset == -3);
    CHECK(r.new_age == 31);
}

TEST_CASE("shift_age_anchored: moves starts, keeps ongoing ends", "[perturber]") {
    SemanticGraph g;
    g.durations = {{"du_001", -400, 30, false, true}, {"du_002", -3650, 3651, false, true}, {"du_003", -10, 5}};
    const auto s = shift_age_anchored(g, 2);
    CHECK(s.durations[0].start() == -400 - 730);
    CHECK(s.durations[0].span_days == 30);
    CHECK(s.durations[1].start() == -3650 - 730);
    CHECK(s.durations[1].end() == 1);
    CHECK(s.durations[2] == g.durations[2]);
    CHECK(shift_age_anchored(g, 0) == g);
}

TEST_CASE("perturb_sex: pinned, never, always", "[perturber]") {
    PerturbConfig cfg;
    auto g = with_diagnosis("Premenstrual dysphoric disorder", 30);
    g.attributes.demographics.sex = "female";
    cfg.sex_flip_probability = 1.0;
    Rng rng = case_rng(3, "x");
    PerturbAudit audit;
    CHECK(perturb_sex(g, cfg, shipped().rules, rng, audit) == "female");
    CHECK(audit.sex_decision.find("pinned") != std::string::npos);

    const auto free = with_diagnosis("Panic disorder", 30);
    PerturbAudit a2;
    CHECK(perturb_sex(free, cfg, shipped().rules, rng, a2) == "female");
    cfg.sex_flip_probability = 0.0;
    PerturbAudit a3;
    CHECK(perturb_sex(free, cfg, shipped().rules, rng, a3) == "male");
}

TEST_CASE("perturb_identity_fields: minor and change gates", "[perturber]") {
    auto g = with_diagnosis("Panic disorder", 14);
    g.attributes.demographics.occupation = "student";
    auto mock = std::make_shared<MockBackend>();
    mock->add("identity_fields", {{"case_id", "c"}, {"attempt", "0"}}, R"({"occupation": "investment banker"})");
    mock->add("identity_fields", {{"case_id", "c"}, {"attempt", "1"}}, R"({"occupation": "Student"})");
    mock->add("identity_fields", {{"case_id", "c"}, {"attempt", "2"}}, R"({"occupation": "high school pupil"})");
    Gateway gw(mock, quick());
    PerturbAudit audit;
    const auto r = perturb_identity_fields(g, 14, "male", gw, {}, "c", audit);
    CHECK(r.occupation == "high school pupil");
    REQUIRE(audit.rejections.size() == 2);
    CHECK(audit.rejections[0].find("not permitted for age 14") != std::string::npos);
    CHECK(audit.rejections[1].find("occupation unchanged") != std::string::npos);
}

TEST_CASE("rewrite_visit_episode: scaffold and similarity gates", "[perturber]") {
    SemanticGraph g = with_diagnosis("Panic disorder", 30);
    g.visit_event = {"outpatient clinic", "family", "voluntary", "panic", {}, "patient", std::nullopt,
                     "Her sister drove her to the Maple Street clinic on Tuesday after a panic attack at the bakery."};
    auto mock = std::make_shared<MockBackend>();
    mock->add("visit_rewrite", {{"case_id", "c"}, {"attempt", "0"}},
              R"({"visit_episode": "She arrived under police escort after a panic attack at work."})");
    mock->add("visit_rewrite", {{"case_id", "c"}, {"attempt", "1"}},
              R"({"visit_episode": "Her sister drove her to the Maple Street clinic on Tuesday after a panic attack at the bakery."})");
    mock->add("visit_rewrite", {{"case_id", "c"}, {"attempt", "2"}},
              R"({"visit_episode": "A relative accompanied her to a community practice following a sudden surge of fear during errands."})");
    Gateway gw(mock, quick());
    PerturbAudit audit;
    auto cfg = trigram_cfg();
    cfg.max_retries = 2;
    const auto v = rewrite_visit_episode(g, 31, "female", gw, cfg, shipped().scaffold_lexicon, "c", audit);
    CHECK(v.visit_episode.rfind("A relative accompanied", 0) == 0);
    REQUIRE(audit.rejections.size() == 2);
    CHECK(audit.rejections[0].find("police") != std::string::npos);
    CHECK(audit.rejections[1].find("too similar") != std::string::npos);
    CHECK(visit_scaffold(v) == visit_scaffold(g.visit_event));
}

TEST_CASE("similarity_gate: identity, disjoint, boundary", "[perturber]") {
    const std::string a = "she walked to the corner shop every morning";
    CHECK_FALSE(similarity_gate(a, a, 0.85, SimilarityBackend::trigram).accepted);
    const auto disjoint = similarity_gate(a, "loud trains passed overhead at night", 0.85, SimilarityBackend::trigram);
    CHECK(disjoint.accepted);
    CHECK(disjoint.score == 0.0);
    CHECK(similarity_gate(a, a, 1.0, SimilarityBackend::trigram).accepted);
    HashedEmbedder emb;
    CHECK_FALSE(similarity_gate(a, a, 0.85, SimilarityBackend::embedding, &emb).accepted);
}

TEST_CASE("rewrite_steb_contexts: retrograde order and field sets", "[perturber]") {
    SemanticGraph g = with_diagnosis("Panic disorder", 30);
    g.durations = {{"du_001", -400, 10}, {"du_002", -30, 5}, {"du_003", -7, 3}};
    g.symptoms = {{"s_001", "fear", "", false, "", {StebContext{"at the market", "I will faint", std::nullopt, "left"}}, {"du_001"}},
                  {"s_002", "palpitations", "", false, "", {StebContext{"on a bus", std::nullopt, "scared", "got off"}}, {"du_002"}},
                  {"s_003", "avoidance", "", false, "", {StebContext{std::nullopt, std::nullopt, std::nullopt, "stayed home"}}, {"du_003"}}};
    auto mock = std::make_shared<MockBackend>();
    auto reply = [&](const std::string& node, const std::string& text) {
        mock->add("steb_rewrite", {{"case_id", "c"}, {"node_id", node}, {"context", "0"}, {"attempt", "0"}}, text);
    };
    reply("s_001", R"({"situation": "in a crowded hall", "thought": "collapse was near", "emotion": "dread", "behavior": "hurried out"})");
    reply("s_002", R"({"situation": "in a taxi", "emotion": "alarmed", "behavior": "asked to stop"})");
    reply("s_003", R"({"behavior": "remained indoors"})");
    Gateway gw(mock, quick());
    PerturbAudit audit;
    const auto r = rewrite_steb_contexts(g, "visit", 30, gw, trigram_cfg(), "c", audit);

    std::vector<std::string> order;
    for (const auto& call : mock->calls()) order.push_back(call.key_vars.at("node_id"));
    CHECK(order == std::vector<std::string>{"s_003", "s_002", "s_001"});
    for (std::size_t i = 0; i < g.symptoms.size(); ++i)
        CHECK(present_fields(r.symptoms[i].contexts[0]) == present_fields(g.symptoms[i].contexts[0]));
    CHECK_FALSE(r.symptoms[0].contexts[0].emotion.has_value());
    CHECK(contains(audit.flags, "s_001#0: dropped added field emotion"));
    CHECK(r.symptoms[2].contexts[0].behavior == "remained indoors");
}

TEST_CASE("rewrite_steb_contexts: near copies keep the originals", "[perturber]") {
    SemanticGraph g = with_diagnosis("Panic disorder", 30);
    g.durations = {{"du_001", -7, 3}};
    g.symptoms = {{"s_001", "avoidance", "", false, "", {StebContext{"at the mall", std::nullopt, std::nullopt, "stayed home"}}, {"du_001"}}};
    auto mock = std::make_shared<MockBackend>();
    for (const char* attempt : {"0", "1"})
        mock->add("steb_rewrite", {{"case_id", "c"}, {"node_id", "s_001"}, {"context", "0"}, {"attempt", attempt}},
                  R"({"situation": "at the mall", "behavior": "stayed home"})");
    Gateway gw(mock, quick());
    PerturbAudit audit;
    const auto r = rewrite_steb_contexts(g, "visit", 30, gw, trigram_cfg(), "c", audit);
    CHECK(r == g);
    CHECK(contains(audit.flags, "s_001#0: all rewrites rejected"));
}

TEST_CASE("perturb_test_values: pool closure", "[perturber]") {
    CaseAttributes attrs;
    attrs.test_results.labs = "MMSE 27; fasting glucose 92 mg/dL; FSIQ 999.";
    for (std::int64_t seed = 0; seed < 100; ++seed) {
        Rng rng = case_rng(seed, "x");
        PerturbAudit audit;
        const auto out = perturb_test_values(attrs, shipped().test_pools, rng, audit);
        int mmse = -1;
        int glucose = -1;
        REQUIRE(std::sscanf(out.test_results.labs.c_str(), "MMSE %d; fasting glucose %d", &mmse, &glucose) == 2);
        CHECK(mmse >= 24);
        CHECK(mmse <= 30);
        CHECK(mmse != 27);
        CHECK(glucose >= 70);
        CHECK(glucose <= 99);
        CHECK(glucose != 92);
        CHECK(out.test_results.labs.find("FSIQ 999.") != std::string::npos);
        CHECK(contains(audit.flags, "999 outside all pools"));
    }
    Rng a = case_rng(42, "case");
    Rng b = case_rng(42, "case");
    PerturbAudit x;
    PerturbAudit y;
    CHECK(perturb_test_values(attrs, shipped().test_pools, a, x) == perturb_test_values(attrs, shipped().test_pools, b, y));
}

TEST_CASE("align_mse: skip, accept, and perception gate", "[perturber]") {
    CaseAttributes attrs;
    attrs.test_results.mental_status = "He appeared tidy. His mood was low. He denied hallucinations. Insight was fair.";
    auto mock = std::make_shared<MockBackend>();
    Gateway gw(mock, quick());
    PerturbAudit audit;
    CHECK(align_mse(attrs, {}, {}, gw, trigram_cfg(), "c", audit) == attrs.test_results.mental_status);
    CHECK(mock->calls().empty());

    mock->add("mse_align", {{"case_id", "c"}, {"attempt", "0"}}, "She appeared tidy. Her mood was low. Insight was fair.");
    mock->add("mse_align", {{"case_id", "c"}, {"attempt", "1"}},
              "She appeared tidy. Her mood was low. She denied hallucinations. Insight was fair.");
    const auto edited = align_mse(attrs, {"sex: male -> female"}, {}, gw, trigram_cfg(), "c", audit);
    CHECK(edited == "She appeared tidy. Her mood was low. She denied hallucinations. Insight was fair.");
    REQUIRE(audit.rejections.size() == 1);
    CHECK(audit.rejections[0].find("perception") != std::string::npos);
}

TEST_CASE("perturb: fixture cases keep the backbone and match goldens", "[perturber]") {
    HashedEmbedder emb;
    PerturbConfig cfg;
    cfg.seed = 42;
    for (const std::string id : {"case_001", "case_002", "case_003"}) {
        const auto g = golden(id);
        Gateway gw(t::fixture_backend(), quick());
        const auto r = perturb(g, gw, cfg, shipped(), id, &emb);
        CHECK(serialize_yaml(r.graph) == t::read_file(t::fixture_dir() / "golden" / id / "graph.perturbed.yaml"));
        CHECK(r.graph.durations == g.durations);
        CHECK(r.graph.relations == g.relations);
        CHECK(temporal_signature(r.graph) == temporal_signature(g));
        CHECK(check_consistency(g, r.graph).passed());
        for (std::size_t i = 0; i < g.symptoms.size(); ++i)
            for (std::size_t c = 0; c < g.symptoms[i].contexts.size(); ++c)
                CHECK(present_fields(r.graph.symptoms[i].contexts[c]) == present_fields(g.symptoms[i].contexts[c]));

        Gateway again(t::fixture_backend(), quick());
        CHECK(perturb(g, again, cfg, shipped(), id, &emb).graph == r.graph);
    }
}

TEST_CASE("perturb: frozen test-value draws under seed 42", "[perturber]") {
    HashedEmbedder emb;
    PerturbConfig cfg;
    cfg.seed = 42;
    Gateway gw(t::fixture_backend(), quick());
    const auto r = perturb(golden("case_002"), gw, cfg, shipped(), "case_002", &emb);
    CHECK(r.graph.attributes.demographics.age == 51);
    CHECK(r.graph.attributes.test_results.labs == "His MMSE score was 27 and fasting glucose was 70 mg/dL.");
    CHECK(r.audit.test_value_changes ==
          std::vector<std::string>{"labs: MMSE 29 -> 27 (normal)", "labs: fasting glucose 92 -> 70 (normal)"});
}
