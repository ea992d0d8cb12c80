#include <catch_amalgamated.hpp>

#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "anonpsy/gateway.hpp"
#include "anonpsy/prompts.hpp"
#include "generators.hpp"

using namespace anonpsy;
namespace t = anonpsy::testing;

namespace {

GatewayOptions quick(int attempts = 3) {
    GatewayOptions opt;
    opt.retry = {attempts, std::chrono::milliseconds(0)};
    opt.seed = 42;
    return opt;
}

PromptCall lead_call(const std::string& case_id) {
    return {"lead_paragraph",
            {{"summary", "age: 30\nsex: female"}},
            {{"case_id", case_id}},
            0.1};
}

}  // namespace

TEST_CASE("temperature_for: per-operator policy", "[gateway]") {
    CHECK(temperature_for(Operator::convert) == 0.1);
    CHECK(temperature_for(Operator::perturb) == 0.7);
    CHECK(temperature_for(Operator::generate) == 0.1);
    CHECK(temperature_for(Operator::llm_only_rewrite) == 0.2);
    CHECK(temperature_for(Operator::llm_only_critique) == 0.0);
}

TEST_CASE("mock backend: fixture text is returned verbatim", "[gateway]") {
    auto mock = t::fixture_backend();
    Gateway gw(mock, quick());
    const auto digest = MockBackend::key_digest({{"case_id", "case_001"}, {"attempt", "0"}});
    const auto expected = t::read_file(t::fixture_dir() / "mock/lead_paragraph" / (digest + ".txt"));
    REQUIRE_FALSE(expected.empty());
    const auto res = gw.complete(gw.build(lead_call("case_001")));
    CHECK(res.text == expected);
    CHECK(res.backend == BackendKind::mock);
    REQUIRE(mock->calls().size() == 1);
    CHECK(mock->calls()[0].key_vars.at("attempt") == "0");
}

TEST_CASE("mock backend: unknown key names the key", "[gateway]") {
    Gateway gw(t::fixture_backend(), quick());
    try {
        gw.complete(gw.build(lead_call("case_404")));
        FAIL("missing fixture accepted");
    } catch (const GatewayError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("lead_paragraph/") != std::string::npos);
        CHECK(msg.find("case_404") != std::string::npos);
    }
}

TEST_CASE("key_digest: order independent and value sensitive", "[gateway]") {
    const auto a = MockBackend::key_digest({{"case_id", "x"}, {"node_id", "s_001"}});
    CHECK(a.size() == 16);
    CHECK(a == MockBackend::key_digest({{"node_id", "s_001"}, {"case_id", "x"}}));
    CHECK(a != MockBackend::key_digest({{"case_id", "x"}, {"node_id", "s_002"}}));
    // separators keep "ab"+"c" apart from "a"+"bc"
    CHECK(MockBackend::key_digest({{"a", "bc"}}) != MockBackend::key_digest({{"ab", "c"}}));
}

TEST_CASE("cache: second request is served from the cache", "[gateway]") {
    auto mock = std::make_shared<MockBackend>();
    mock->add("lead_paragraph", {{"case_id", "c"}, {"attempt", "0"}}, "She arrived. She was calm.");
    auto opt = quick();
    opt.cache = std::make_shared<ResponseCache>(t::scratch_dir("gateway_cache"));
    Gateway gw(mock, opt);
    const auto req = gw.build(lead_call("c"));
    const auto first = gw.complete(req);
    const auto second = gw.complete(req);
    CHECK(first.backend == BackendKind::mock);
    CHECK(second.backend == BackendKind::cache);
    CHECK(second.text == first.text);
    CHECK(mock->calls().size() == 1);
}

TEST_CASE("cache key: temperature, model and seed all matter", "[gateway]") {
    ChatRequest a;
    a.messages = {{"user", "hello"}};
    a.temperature = 0.1;
    a.model = "m";
    auto b = a;
    b.temperature = 0.7;
    auto c = a;
    c.model = "n";
    auto d = a;
    d.seed = 1;
    CHECK(ResponseCache::key(a) == ResponseCache::key(a));
    CHECK(ResponseCache::key(a) != ResponseCache::key(b));
    CHECK(ResponseCache::key(a) != ResponseCache::key(c));
    CHECK(ResponseCache::key(a) != ResponseCache::key(d));
}

TEST_CASE("retry: transient failures are retried, then reported", "[gateway]") {
    auto mock = std::make_shared<MockBackend>();
    mock->add("lead_paragraph", {{"case_id", "c"}, {"attempt", "0"}}, "ok");
    mock->fail_next("lead_paragraph", 2);
    Gateway gw(mock, quick(3));
    CHECK(gw.complete(gw.build(lead_call("c"))).text == "ok");
    CHECK(mock->calls().size() == 3);

    mock->fail_next("lead_paragraph", 3);
    CHECK_THROWS_AS(gw.complete(gw.build(lead_call("c"))), GatewayError);

    auto empty = std::make_shared<MockBackend>();
    empty->add("lead_paragraph", {{"case_id", "c"}, {"attempt", "0"}}, "  \n");
    Gateway gw2(empty, quick(2));
    CHECK_THROWS_AS(gw2.complete(gw2.build(lead_call("c"))), GatewayError);
    CHECK(empty->calls().size() == 2);
}

TEST_CASE("complete_validated: feedback reaches the next attempt", "[gateway]") {
    auto mock = std::make_shared<MockBackend>();
    mock->add("lead_paragraph", {{"case_id", "c"}, {"attempt", "0"}}, "bad");
    mock->add("lead_paragraph", {{"case_id", "c"}, {"attempt", "1"}}, "good");
    Gateway gw(mock, quick());
    const auto r = complete_validated(gw, lead_call("c"), 3, [](const std::string& s) -> std::optional<std::string> {
        if (s == "bad") return "too short";
        return std::nullopt;
    });
    CHECK(r.accepted == "good");
    CHECK(r.attempts == 2);
    CHECK(r.rejections == std::vector<std::string>{"too short"});

    const auto req = gw.build(lead_call("c"), 1, "too short");
    CHECK(req.messages.back().content.find("too short") != std::string::npos);
    CHECK(req.key_vars.at("attempt") == "1");
}

TEST_CASE("prompts: rendering and missing placeholders", "[gateway]") {
    CHECK(render("Hi {name}, {x} {not closed", {{"name", "A"}, {"x", "1"}}) == "Hi A, 1 {not closed");
    CHECK_THROWS_AS(render("{missing}", {}), Error);
    CHECK_THROWS_AS(prompt_template("no_such_template"), Error);
    CHECK(prompt_asset_hashes().count("lead_paragraph.user.txt") == 1);
}

TEST_CASE("http backend: Ollama and OpenAI reply shapes", "[gateway]") {
    httplib::Server server;
    nlohmann::json seen;
    int failures = 1;
    server.Post("/api/chat", [&](const httplib::Request& req, httplib::Response& res) {
        if (failures-- > 0) {
            res.status = 503;
            return;
        }
        seen = nlohmann::json::parse(req.body);
        res.set_content(R"({"message": {"role": "assistant", "content": "from ollama"}})", "application/json");
    });
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen = nlohmann::json::parse(req.body);
        res.set_content(R"({"choices": [{"message": {"content": "from openai"}}]})", "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    const std::string base = "http://127.0.0.1:" + std::to_string(port);
    Gateway ollama(std::make_shared<HttpBackend>(base + "/api/chat"), quick());
    CHECK(ollama.complete(ollama.build(lead_call("c"))).text == "from ollama");
    CHECK(seen["options"]["temperature"] == 0.1);
    CHECK(seen["options"]["seed"] == 42);
    CHECK(seen["messages"].back()["role"] == "user");

    Gateway openai(std::make_shared<HttpBackend>(base + "/v1/chat/completions"), quick());
    CHECK(openai.complete(openai.build(lead_call("c"))).text == "from openai");
    CHECK(seen["temperature"] == 0.1);

    server.stop();
    th.join();
}
