#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "anonpsy/error.hpp"
#include "anonpsy/prompts.hpp"

namespace anonpsy {

enum class Operator { convert, perturb, generate, llm_only_rewrite, llm_only_critique };

/// Decoding temperature per operator: 0.1 / 0.7 / 0.1 / 0.2 / 0.0.
double temperature_for(Operator op);

enum class BackendKind { live, mock, cache };
std::string_view to_string(BackendKind kind);

struct ChatMessage {
    std::string role;  // "system" or "user"
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
    std::string template_id;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    std::optional<std::int64_t> seed;
    std::string model;
    /// Variables that identify the call for the mock backend (case id, node id, attempt, ...).
    PromptVars key_vars;
};

struct ChatResponse {
    std::string text;
    BackendKind backend = BackendKind::live;
    std::int64_t latency_ms = 0;
};

/// Retryable failure: connection errors, 5xx replies, scripted mock faults.
class TransientError : public Error {
public:
    using Error::Error;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual std::string send(const ChatRequest& req) = 0;
    virtual BackendKind kind() const = 0;
};

/// Canned responses keyed by (template_id, digest of key_vars), loaded from
/// `<dir>/<template_id>/<digest>.txt` or registered in memory. Missing keys are hard errors.
class MockBackend : public ChatBackend {
public:
    struct Call {
        std::string template_id;
        std::string digest;
        PromptVars key_vars;
    };

    MockBackend() = default;
    explicit MockBackend(std::filesystem::path fixture_dir);

    void add(const std::string& template_id, const PromptVars& key_vars, std::string text);
    /// The next `count` calls for `template_id` throw TransientError.
    void fail_next(const std::string& template_id, int count);

    std::string send(const ChatRequest& req) override;
    BackendKind kind() const override { return BackendKind::mock; }

    std::vector<Call> calls() const;
    void clear_calls();

    /// First 16 hex digits of SHA-256 over "name\x1fvalue\x1e" records in name order.
    static std::string key_digest(const PromptVars& key_vars);

private:
    std::optional<std::filesystem::path> dir_;
    std::map<std::string, std::string> memory_;  // "<template>/<digest>" -> text
    std::map<std::string, int> failures_;
    std::vector<Call> calls_;
    mutable std::mutex mu_;
};

/// Chat-completion client for Ollama (/api/chat) or OpenAI-style (/v1/chat/completions) endpoints.
class HttpBackend : public ChatBackend {
public:
    HttpBackend(std::string endpoint, std::chrono::seconds timeout = std::chrono::seconds(300));
    std::string send(const ChatRequest& req) override;
    BackendKind kind() const override { return BackendKind::live; }

private:
    std::string base_;
    std::string path_;
    std::chrono::seconds timeout_;
};

/// Response cache keyed by SHA-256 of (model, temperature, seed, messages). Directory-backed when
/// a path is given, in-memory otherwise; safe for concurrent use.
class ResponseCache {
public:
    ResponseCache() = default;
    explicit ResponseCache(std::filesystem::path dir);

    static std::string key(const ChatRequest& req);
    std::optional<std::string> get(const std::string& key) const;
    void put(const std::string& key, const std::string& text);

private:
    std::optional<std::filesystem::path> dir_;
    std::map<std::string, std::string> memory_;
    mutable std::mutex mu_;
};

struct RetryPolicy {
    int attempts = 3;
    std::chrono::milliseconds initial_backoff{500};
};

struct GatewayOptions {
    std::string model = "gpt-oss:120b";
    std::optional<std::int64_t> seed;
    RetryPolicy retry;
    std::shared_ptr<ResponseCache> cache;  // null disables caching
};

/// One rendered template invocation.
struct PromptCall {
    std::string template_id;
    PromptVars vars;
    PromptVars key_vars;
    double temperature = 0.0;
};

class Gateway {
public:
    Gateway(std::shared_ptr<ChatBackend> backend, GatewayOptions options);

    /// Sends with retry on TransientError and empty output. Throws GatewayError after the last attempt.
    ChatResponse complete(const ChatRequest& req);

    /// Renders `call` into a request. `attempt` is added to the key vars; a non-empty `feedback`
    /// is appended to the user message so retries differ from the first try.
    ChatRequest build(const PromptCall& call, int attempt = 0, const std::string& feedback = {}) const;

    const GatewayOptions& options() const { return options_; }
    ChatBackend& backend() { return *backend_; }

private:
    std::shared_ptr<ChatBackend> backend_;
    GatewayOptions options_;
};

/// Outcome of a validated exchange: the accepted text, or nothing when every attempt was rejected.
struct ValidatedReply {
    std::optional<std::string> accepted;
    std::vector<std::string> rejections;
    int attempts = 0;
};

/// Validator returns a rejection reason, or nullopt to accept.
using ReplyValidator = std::function<std::optional<std::string>(const std::string&)>;

/// Asks up to `max_attempts` times, feeding each rejection reason back into the next prompt.
/// Gateway failures propagate.
ValidatedReply complete_validated(Gateway& gw, const PromptCall& call, int max_attempts,
                                  const ReplyValidator& validate);

}  // namespace anonpsy
