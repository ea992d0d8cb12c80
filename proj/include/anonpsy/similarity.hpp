#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>

namespace anonpsy {

/// Sparse document vector: dimension -> weight.
using Embedding = std::map<std::uint64_t, double>;

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual Embedding embed(std::string_view text) = 0;
    virtual std::string name() const = 0;
};

/// Unigram + bigram term frequencies hashed (FNV-1a) into `dims` buckets, L2-normalized.
class HashedEmbedder : public Embedder {
public:
    explicit HashedEmbedder(std::uint64_t dims = std::uint64_t{1} << 24) : dims_(dims) {}
    Embedding embed(std::string_view text) override;
    std::string name() const override { return "hashed-tf"; }

private:
    std::uint64_t dims_;
};

/// Embeddings from an Ollama-compatible /api/embeddings endpoint.
class HttpEmbedder : public Embedder {
public:
    HttpEmbedder(std::string endpoint, std::string model, std::size_t max_chars = 8000);
    Embedding embed(std::string_view text) override;
    std::string name() const override { return model_; }

private:
    std::string base_;
    std::string path_;
    std::string model_;
    std::size_t max_chars_;
};

/// Cosine of two sparse vectors; 0 when either is zero.
double cosine(const Embedding& a, const Embedding& b);

double doc_similarity(std::string_view a, std::string_view b, Embedder& embedder);

/// Jaccard similarity of token-trigram sets. Texts with fewer than three tokens form one shingle.
double trigram_jaccard(std::string_view a, std::string_view b);

enum class SimilarityBackend { embedding, trigram };

struct GateResult {
    bool accepted = true;
    double score = 0.0;
};

/// Rejects a candidate whose similarity to the original exceeds `tau`.
GateResult similarity_gate(std::string_view original, std::string_view candidate, double tau,
                           SimilarityBackend backend, Embedder* embedder = nullptr);

}  // namespace anonpsy
