#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "anonpsy/gateway.hpp"

namespace anonpsy {

struct PhiSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::string placeholder;  // "[DATE]", "[NAME]", ...

    bool operator==(const PhiSpan&) const = default;
};

/// Named-entity source for person, location and organization spans.
class NerBackend {
public:
    virtual ~NerBackend() = default;
    virtual std::vector<PhiSpan> find(std::string_view text) = 0;
    virtual std::string name() const = 0;
};

/// Capitalization cues: honorific and introduced names, institution suffixes, place names after locative words.
class HeuristicNer : public NerBackend {
public:
    std::vector<PhiSpan> find(std::string_view text) override;
    std::string name() const override { return "heuristic"; }
};

/// Regex rules for dates, phone numbers, e-mail, URLs, addresses, ages over 89 and id-like tokens.
std::vector<PhiSpan> phi_regex_spans(std::string_view text);

struct PhiResult {
    std::string text;
    std::vector<PhiSpan> spans;  // on the input, non-overlapping, ascending
    std::vector<std::string> flags;
};

/// Regex spans take precedence over NER spans; a null backend means regex-only mode (flagged).
PhiResult phi_mask(std::string_view text, NerBackend* ner);

struct BaselineOptions {
    std::string case_id;
    double sdc_temperature = 0.7;
    int max_attempts = 3;
};

/// One-pass unconstrained rewrite.
std::string sdc_rewrite(const std::string& text, Gateway& gw, const BaselineOptions& opt);

struct LlmOnlyResult {
    std::string draft;
    std::string final_text;
};

/// Constrained rewrite followed by a self-critique pass.
LlmOnlyResult llm_only(const std::string& text, Gateway& gw, const BaselineOptions& opt);

}  // namespace anonpsy
