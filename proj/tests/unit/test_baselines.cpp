#include <catch_amalgamated.hpp>

#include <mutex>

#include "anonpsy/baselines.hpp"
#include "anonpsy/digest.hpp"
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

/// Forwards to a mock and keeps every request it saw.
class RecordingBackend : public ChatBackend {
public:
    explicit RecordingBackend(std::shared_ptr<ChatBackend> inner) : inner_(std::move(inner)) {}
    std::string send(const ChatRequest& req) override {
        std::lock_guard lock(mu_);
        requests.push_back(req);
        return inner_->send(req);
    }
    BackendKind kind() const override { return inner_->kind(); }
    std::vector<ChatRequest> requests;

private:
    std::shared_ptr<ChatBackend> inner_;
    std::mutex mu_;
};

std::string fixture_text(const std::string& name) { return t::read_file(t::fixture_dir() / "corpus" / name); }

/// Output equals the input with each span replaced by its placeholder, and nothing else changed.
void check_only_spans_changed(const std::string& in, const PhiResult& r) {
    std::size_t at_in = 0;
    std::size_t at_out = 0;
    for (const auto& s : r.spans) {
        REQUIRE(s.begin >= at_in);
        REQUIRE(s.begin < s.end);
        REQUIRE(s.end <= in.size());
        const auto kept = in.substr(at_in, s.begin - at_in);
        REQUIRE(r.text.compare(at_out, kept.size(), kept) == 0);
        at_out += kept.size();
        REQUIRE(r.text.compare(at_out, s.placeholder.size(), s.placeholder) == 0);
        at_out += s.placeholder.size();
        at_in = s.end;
    }
    CHECK(r.text.substr(at_out) == in.substr(at_in));
}

const std::vector<std::string> kPhiPieces = {
    "on 2019-05-04",  "on 03/11/2021",      "at 555-867-5309",      "via jo.doe@example.org",
    "a 92-year-old",  "MRN 00123456",       "at 14 Elm Street",     "Dr. Helen Park",
    "in Springfield", "at Riverside Hospital", "see https://example.org/x"};

const std::vector<std::string> kPlainPieces = {
    "she felt low",     "sleep was poor",   "he denied voices", "mood improved",   "(no change)",
    "appetite: fair",   "état stable", "  spaced  out  ", "a 45-year-old",   "[bracketed]",
    "scores 3/5",       "Friday morning",   "ratio 2:1",        "#tag",            "\ttabbed\n"};

}  // namespace

TEST_CASE("phi_mask worked examples", "[baselines]") {
    HeuristicNer ner;
    CHECK(phi_mask("seen on 2019-05-04", &ner).text == "seen on [DATE]");
    CHECK(phi_mask("she slept poorly and felt low", &ner).text == "she slept poorly and felt low");
    CHECK(phi_mask("a 92-year-old", &ner).text == "a [AGE]-year-old");
    CHECK(phi_mask("a 45-year-old", &ner).text == "a 45-year-old");
    CHECK(phi_mask("call 555-867-5309 today", &ner).text == "call [PHONE] today");
    CHECK(phi_mask("Mr. Alvarez was seen.", &ner).text.find("Alvarez") == std::string::npos);
}

TEST_CASE("phi_mask without NER runs regex rules and flags it", "[baselines]") {
    const auto r = phi_mask("Mr. Alvarez was seen on 2019-05-04.", nullptr);
    CHECK(r.text == "Mr. Alvarez was seen on [DATE].");
    REQUIRE(r.flags.size() == 1);
    CHECK(r.flags[0].find("regex-only") != std::string::npos);
    HeuristicNer ner;
    CHECK(phi_mask("nothing here", &ner).flags.empty());
}

TEST_CASE("phi_mask leaves bytes outside spans untouched", "[baselines]") {
    HeuristicNer ner;
    t::TestRng rng(2024);
    for (int i = 0; i < 300; ++i) {
        std::string in;
        const int n = t::uniform_int(rng, 0, 10);
        for (int k = 0; k < n; ++k) {
            const auto& pool = t::coin(rng, 0.4) ? kPhiPieces : kPlainPieces;
            in += pool[static_cast<std::size_t>(t::uniform_int(rng, 0, static_cast<int>(pool.size()) - 1))];
            in += t::coin(rng) ? ". " : ", ";
        }
        INFO(in);
        check_only_spans_changed(in, phi_mask(in, &ner));
        check_only_spans_changed(in, phi_mask(in, nullptr));
    }
    for (const std::string name : {"case_001.txt", "case_002.txt", "case_003.txt"}) {
        const auto in = fixture_text(name);
        check_only_spans_changed(in, phi_mask(in, &ner));
    }
}

TEST_CASE("sdc_rewrite", "[baselines]") {
    const auto in = fixture_text("case_001.txt");
    Gateway gw(t::fixture_backend(), quick());
    const auto first = sdc_rewrite(in, gw, {"case_001", 0.7, 3});
    CHECK(first.rfind("A 36-year-old woman who works as a library assistant", 0) == 0);
    Gateway again(t::fixture_backend(), quick());
    CHECK(sdc_rewrite(in, again, {"case_001", 0.7, 3}) == first);
    CHECK_THROWS_AS(sdc_rewrite(" \n", gw, {"case_001", 0.7, 3}), Error);
}

TEST_CASE("llm_only runs the rewrite and the audit", "[baselines]") {
    const auto in = fixture_text("case_001.txt");
    auto rec = std::make_shared<RecordingBackend>(t::fixture_backend());
    Gateway gw(rec, quick());
    const auto out = llm_only(in, gw, {"case_001", 0.7, 3});
    CHECK(out.final_text.find("She was started on an antipsychotic.") != std::string::npos);
    CHECK(out.draft.find("She was started on an antipsychotic at night.") != std::string::npos);

    REQUIRE(rec->requests.size() == 2);
    const auto& stage1 = rec->requests[0];
    const auto& stage2 = rec->requests[1];
    CHECK(stage1.template_id == "llm_only_rewrite");
    CHECK(stage1.temperature == 0.2);
    CHECK(stage2.template_id == "llm_only_critique");
    CHECK(stage2.temperature == 0.0);
    CHECK(temperature_for(Operator::llm_only_critique) == 0.0);

    const auto& rewrite = prompt_template("llm_only_rewrite");
    REQUIRE(stage1.messages.size() == 2);
    CHECK(stage1.messages[0] == ChatMessage{"system", rewrite.system});
    CHECK(stage1.messages[1] == ChatMessage{"user", text::replace_all(rewrite.user, "{case_text}", in)});
    const auto& critique = prompt_template("llm_only_critique");
    REQUIRE(stage2.messages.size() == 1);
    CHECK(stage2.messages[0] == ChatMessage{"user", text::replace_all(critique.user, "{draft_text}", out.draft)});
}

TEST_CASE("llm_only accepts an unchanged audit", "[baselines]") {
    auto mock = std::make_shared<MockBackend>();
    const std::string draft = "A woman in her thirties was seen at a clinic. She felt low.";
    mock->add("llm_only_rewrite", {{"case_id", "c"}, {"attempt", "0"}}, draft);
    mock->add("llm_only_critique", {{"case_id", "c"}, {"attempt", "0"}}, draft + "\n");
    Gateway gw(mock, quick());
    const auto out = llm_only("original text", gw, {"c", 0.7, 3});
    CHECK(out.final_text == draft);
    CHECK_THROWS_AS(llm_only("", gw, {"c", 0.7, 3}), Error);
}

TEST_CASE("llm_only fails when a stage has no reply", "[baselines]") {
    auto mock = std::make_shared<MockBackend>();
    mock->add("llm_only_rewrite", {{"case_id", "c"}, {"attempt", "0"}}, "A draft.");
    Gateway gw(mock, quick());
    CHECK_THROWS_AS(llm_only("original text", gw, {"c", 0.7, 3}), GatewayError);
}

TEST_CASE("two-stage rewrite prompts are unchanged", "[baselines]") {
    // Hashes from tests/oracles/prompt_oracle.py over the published listings.
    const auto hashes = prompt_asset_hashes();
    CHECK(hashes.at("llm_only_rewrite.system.txt") == "af3aa8fe632351c1f20f4cbcba9a11dda0015c381aca0575593ebca863aa1624");
    CHECK(hashes.at("llm_only_rewrite.user.txt") == "5de2c487783410b53a3b5871de74ef9655ffca676f1dab9646a5007ba806de40");
    CHECK(hashes.at("llm_only_critique.user.txt") == "2946995265d7384117ee435184e59e84f0d7999b9a4f6c6914553cf782ba46c5");
    for (const auto& [name, hash] : hashes) {
        INFO(name);
        CHECK(hash == sha256_hex(t::read_file(t::fixture_dir() / ".." / ".." / "assets" / "prompts" / name)));
    }
}
