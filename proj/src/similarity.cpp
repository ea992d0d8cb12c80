#include "anonpsy/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "anonpsy/error.hpp"
#include "anonpsy/text.hpp"

namespace anonpsy {

Embedding HashedEmbedder::embed(std::string_view doc) {
    const auto tokens = text::tokenize(doc);
    Embedding v;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        v[text::fnv1a64(tokens[i]) % dims_] += 1.0;
        if (i + 1 < tokens.size()) v[text::fnv1a64(tokens[i] + " " + tokens[i + 1]) % dims_] += 1.0;
    }
    double norm = 0.0;
    for (const auto& [k, w] : v) norm += w * w;
    norm = std::sqrt(norm);
    if (norm > 0)
        for (auto& [k, w] : v) w /= norm;
    return v;
}

HttpEmbedder::HttpEmbedder(std::string endpoint, std::string model, std::size_t max_chars)
    : model_(std::move(model)), max_chars_(max_chars) {
    const auto scheme = endpoint.find("://");
    const auto slash = endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    base_ = endpoint.substr(0, slash);
    path_ = slash == std::string::npos || endpoint.substr(slash) == "/" ? "/api/embeddings" : endpoint.substr(slash);
}

Embedding HttpEmbedder::embed(std::string_view doc) {
    nlohmann::json body{{"model", model_}, {"prompt", std::string(doc.substr(0, max_chars_))}};
    httplib::Client client(base_);
    client.set_read_timeout(120, 0);
    auto res = client.Post(path_, body.dump(), "application/json");
    if (!res || res->status != 200) throw Error("embedding request failed");
    const auto reply = nlohmann::json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.contains("embedding")) throw Error("embedding reply malformed");
    Embedding v;
    const auto& arr = reply["embedding"];
    for (std::size_t i = 0; i < arr.size(); ++i)
        if (const double w = arr[i].get<double>(); w != 0.0) v[i] = w;
    return v;
}

double cosine(const Embedding& a, const Embedding& b) {
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (const auto& [k, w] : a) {
        na += w * w;
        if (auto it = b.find(k); it != b.end()) dot += w * it->second;
    }
    for (const auto& [k, w] : b) nb += w * w;
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double doc_similarity(std::string_view a, std::string_view b, Embedder& embedder) {
    return cosine(embedder.embed(a), embedder.embed(b));
}

namespace {

std::set<std::string> shingles(std::string_view s) {
    const auto tokens = text::tokenize(s);
    std::set<std::string> out;
    if (tokens.empty()) return out;
    if (tokens.size() < 3) {
        out.insert(text::join(tokens, " "));
        return out;
    }
    for (std::size_t i = 0; i + 2 < tokens.size(); ++i)
        out.insert(tokens[i] + " " + tokens[i + 1] + " " + tokens[i + 2]);
    return out;
}

}  // namespace

double trigram_jaccard(std::string_view a, std::string_view b) {
    const auto x = shingles(a);
    const auto y = shingles(b);
    if (x.empty() && y.empty()) return 1.0;
    std::size_t common = 0;
    for (const auto& s : x) common += y.count(s);
    return static_cast<double>(common) / static_cast<double>(x.size() + y.size() - common);
}

GateResult similarity_gate(std::string_view original, std::string_view candidate, double tau,
                           SimilarityBackend backend, Embedder* embedder) {
    double score = 0.0;
    if (backend == SimilarityBackend::embedding) {
        HashedEmbedder fallback;
        score = doc_similarity(original, candidate, embedder ? *embedder : fallback);
    } else {
        score = trigram_jaccard(original, candidate);
    }
    return {score <= tau, score};
}

}  // namespace anonpsy
