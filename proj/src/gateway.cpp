#include "anonpsy/gateway.hpp"

#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "anonpsy/digest.hpp"

namespace anonpsy {

namespace fs = std::filesystem;
using nlohmann::json;

double temperature_for(Operator op) {
    switch (op) {
        case Operator::convert: return 0.1;
        case Operator::perturb: return 0.7;
        case Operator::generate: return 0.1;
        case Operator::llm_only_rewrite: return 0.2;
        case Operator::llm_only_critique: return 0.0;
    }
    return 0.0;
}

std::string_view to_string(BackendKind kind) {
    switch (kind) {
        case BackendKind::live: return "live";
        case BackendKind::mock: return "mock";
        case BackendKind::cache: return "cache";
    }
    return "live";
}

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string describe(const PromptVars& vars) {
    std::string out;
    for (const auto& [k, v] : vars) {
        if (!out.empty()) out += ", ";
        out += k + "=" + v;
    }
    return out;
}

}  // namespace

// ---- mock ----

MockBackend::MockBackend(fs::path fixture_dir) : dir_(std::move(fixture_dir)) {}

std::string MockBackend::key_digest(const PromptVars& key_vars) {
    std::string buf;
    for (const auto& [k, v] : key_vars) {
        buf += k;
        buf += '\x1f';
        buf += v;
        buf += '\x1e';
    }
    return sha256_hex(buf).substr(0, 16);
}

void MockBackend::add(const std::string& template_id, const PromptVars& key_vars, std::string text) {
    std::lock_guard lock(mu_);
    memory_[template_id + "/" + key_digest(key_vars)] = std::move(text);
}

void MockBackend::fail_next(const std::string& template_id, int count) {
    std::lock_guard lock(mu_);
    failures_[template_id] += count;
}

std::string MockBackend::send(const ChatRequest& req) {
    const std::string digest = key_digest(req.key_vars);
    {
        std::lock_guard lock(mu_);
        calls_.push_back({req.template_id, digest, req.key_vars});
        if (auto it = failures_.find(req.template_id); it != failures_.end() && it->second > 0) {
            --it->second;
            throw TransientError("scripted mock failure");
        }
        if (auto it = memory_.find(req.template_id + "/" + digest); it != memory_.end()) return it->second;
    }
    if (dir_) {
        const fs::path p = *dir_ / req.template_id / (digest + ".txt");
        if (fs::exists(p)) return read_file(p);
    }
    throw GatewayError(req.template_id,
                       "no mock fixture for key " + req.template_id + "/" + digest + " (" +
                           describe(req.key_vars) + ")");
}

std::vector<MockBackend::Call> MockBackend::calls() const {
    std::lock_guard lock(mu_);
    return calls_;
}

void MockBackend::clear_calls() {
    std::lock_guard lock(mu_);
    calls_.clear();
}

// ---- http ----

HttpBackend::HttpBackend(std::string endpoint, std::chrono::seconds timeout) : timeout_(timeout) {
    const auto scheme = endpoint.find("://");
    const auto slash = endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    base_ = endpoint.substr(0, slash);
    path_ = slash == std::string::npos ? "/api/chat" : endpoint.substr(slash);
    if (path_ == "/") path_ = "/api/chat";
}

std::string HttpBackend::send(const ChatRequest& req) {
    const bool openai = path_.find("/v1/") != std::string::npos;
    json body;
    body["model"] = req.model;
    body["messages"] = json::array();
    for (const auto& m : req.messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
    body["stream"] = false;
    if (openai) {
        body["temperature"] = req.temperature;
        if (req.seed) body["seed"] = *req.seed;
    } else {
        body["options"] = {{"temperature", req.temperature}};
        if (req.seed) body["options"]["seed"] = *req.seed;
    }

    httplib::Client client(base_);
    client.set_read_timeout(timeout_.count(), 0);
    client.set_connection_timeout(10, 0);
    auto res = client.Post(path_, body.dump(), "application/json");
    if (!res) throw TransientError("request failed: " + httplib::to_string(res.error()));
    if (res->status >= 500 || res->status == 429)
        throw TransientError("HTTP " + std::to_string(res->status));
    if (res->status != 200)
        throw GatewayError(req.template_id, "HTTP " + std::to_string(res->status) + ": " + res->body);

    json reply;
    try {
        reply = json::parse(res->body);
    } catch (const json::exception& e) {
        throw TransientError(std::string("malformed reply: ") + e.what());
    }
    if (reply.contains("message") && reply["message"].contains("content"))
        return reply["message"]["content"].get<std::string>();
    if (reply.contains("choices") && !reply["choices"].empty())
        return reply["choices"][0]["message"]["content"].get<std::string>();
    throw TransientError("reply has no message content");
}

// ---- cache ----

ResponseCache::ResponseCache(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(*dir_); }

std::string ResponseCache::key(const ChatRequest& req) {
    json k;
    k["model"] = req.model;
    k["temperature"] = req.temperature;
    k["seed"] = req.seed ? json(*req.seed) : json(nullptr);
    k["messages"] = json::array();
    for (const auto& m : req.messages) k["messages"].push_back({m.role, m.content});
    return sha256_hex(k.dump());
}

std::optional<std::string> ResponseCache::get(const std::string& key) const {
    std::lock_guard lock(mu_);
    if (dir_) {
        const fs::path p = *dir_ / (key + ".txt");
        if (!fs::exists(p)) return std::nullopt;
        return read_file(p);
    }
    auto it = memory_.find(key);
    if (it == memory_.end()) return std::nullopt;
    return it->second;
}

void ResponseCache::put(const std::string& key, const std::string& text) {
    std::lock_guard lock(mu_);
    if (dir_) {
        const fs::path tmp = *dir_ / (key + ".tmp");
        {
            std::ofstream out(tmp, std::ios::binary);
            out << text;
        }
        fs::rename(tmp, *dir_ / (key + ".txt"));
        return;
    }
    memory_[key] = text;
}

// ---- gateway ----

Gateway::Gateway(std::shared_ptr<ChatBackend> backend, GatewayOptions options)
    : backend_(std::move(backend)), options_(std::move(options)) {}

ChatRequest Gateway::build(const PromptCall& call, int attempt, const std::string& feedback) const {
    const PromptTemplate& t = prompt_template(call.template_id);
    ChatRequest req;
    req.template_id = call.template_id;
    req.temperature = call.temperature;
    req.seed = options_.seed;
    req.model = options_.model;
    if (!t.system.empty()) req.messages.push_back({"system", render(t.system, call.vars)});
    std::string user = render(t.user, call.vars);
    if (!feedback.empty()) user += "\n\nYour previous answer was rejected: " + feedback + ". Try again.";
    req.messages.push_back({"user", std::move(user)});
    req.key_vars = call.key_vars;
    req.key_vars["attempt"] = std::to_string(attempt);
    return req;
}

ChatResponse Gateway::complete(const ChatRequest& req) {
    if (req.messages.empty()) throw GatewayError(req.template_id, "request has no messages");
    const auto t0 = std::chrono::steady_clock::now();
    const auto elapsed = [&] {
        return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0)
            .count();
    };

    std::string cache_key;
    if (options_.cache) {
        cache_key = ResponseCache::key(req);
        if (auto hit = options_.cache->get(cache_key)) return {*hit, BackendKind::cache, elapsed()};
    }

    std::string last_error;
    auto backoff = options_.retry.initial_backoff;
    const int attempts = std::max(1, options_.retry.attempts);
    for (int i = 0; i < attempts; ++i) {
        if (i > 0) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
        try {
            std::string text = backend_->send(req);
            if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
                last_error = "empty completion";
                continue;
            }
            if (options_.cache) options_.cache->put(cache_key, text);
            return {std::move(text), backend_->kind(), elapsed()};
        } catch (const TransientError& e) {
            last_error = e.what();
        }
    }
    throw GatewayError(req.template_id, last_error + " after " + std::to_string(attempts) + " attempts");
}

ValidatedReply complete_validated(Gateway& gw, const PromptCall& call, int max_attempts,
                                  const ReplyValidator& validate) {
    ValidatedReply out;
    std::string feedback;
    for (int attempt = 0; attempt < std::max(1, max_attempts); ++attempt) {
        const ChatResponse res = gw.complete(gw.build(call, attempt, feedback));
        ++out.attempts;
        if (auto reason = validate(res.text)) {
            out.rejections.push_back(*reason);
            feedback = *reason;
            continue;
        }
        out.accepted = res.text;
        return out;
    }
    return out;
}

}  // namespace anonpsy
