#include "anonpsy/baselines.hpp"

#include <algorithm>
#include <regex>

#include "anonpsy/text.hpp"

namespace anonpsy {

namespace {

struct Rule {
    std::regex re;
    std::string placeholder;
    int group;  // capture group holding the PHI span (0 = whole match)
};

const std::vector<Rule>& regex_rules() {
    static const std::string kMonth =
        "(?:Jan(?:uary)?|Feb(?:ruary)?|Mar(?:ch)?|Apr(?:il)?|May|Jun(?:e)?|Jul(?:y)?|Aug(?:ust)?|"
        "Sep(?:t(?:ember)?)?|Oct(?:ober)?|Nov(?:ember)?|Dec(?:ember)?)";
    static const std::vector<Rule> kRules = [] {
        std::vector<Rule> r;
        auto add = [&](const std::string& pattern, const char* placeholder, int group = 0,
                       std::regex::flag_type extra = std::regex::flag_type{}) {
            r.push_back({std::regex(pattern, std::regex::ECMAScript | extra), placeholder, group});
        };
        add(R"(\bhttps?://[^\s]+[^\s.,;:)])", "[URL]");
        add(R"(\bwww\.[^\s]+[^\s.,;:)])", "[URL]");
        add(R"(\b[A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)+\b)", "[EMAIL]");
        add(R"(\b\d{3}-\d{2}-\d{4}\b)", "[ID]");
        add(R"((?:\(\d{3}\)\s*|\b\d{3}[-.\s])\d{3}[-.]\d{4}\b)", "[PHONE]");
        add(R"(\b\d{4}-\d{1,2}-\d{1,2}\b)", "[DATE]");
        add(R"(\b\d{1,2}/\d{1,2}/\d{2,4}\b)", "[DATE]");
        add("\\b" + kMonth + R"(\.?\s+\d{1,2}(?:st|nd|rd|th)?,?\s+\d{4}\b)", "[DATE]");
        add(R"(\b\d{1,2}(?:st|nd|rd|th)?\s+)" + kMonth + R"(\.?,?\s+\d{4}\b)", "[DATE]");
        add("\\b" + kMonth + R"(\.?\s+\d{4}\b)", "[DATE]");
        add("\\b" + kMonth + R"(\s+\d{1,2}(?:st|nd|rd|th)\b)", "[DATE]");
        add(R"(\b\d{1,5}\s+(?:[A-Z][a-z]+\s+){1,3}(?:Street|St|Avenue|Ave|Road|Rd|Boulevard|Blvd|Lane|Ln|Drive|Court|Ct|Way|Place|Pl|Terrace)\b\.?)",
            "[ADDRESS]");
        add(R"(\b(9\d|1[01]\d)(?=[- ]years?[- ]old\b|\s*(?:yo|y/o)\b))", "[AGE]", 1);
        add(R"(\b(?:aged|age)\s+(9\d|1[01]\d)\b)", "[AGE]", 1, std::regex::icase);
        add(R"(\b(?:MRN|SSN|ID|record(?: number)?|account(?: number)?)\s*(?:#|:|no\.?)?\s*([A-Z0-9][A-Z0-9-]{3,})\b)", "[ID]", 1,
            std::regex::icase);
        add(R"(\b[A-Z]{1,3}\d{5,}\b)", "[ID]");
        add(R"(\b\d{7,}\b)", "[ID]");
        return r;
    }();
    return kRules;
}

bool overlaps(const PhiSpan& a, const std::vector<PhiSpan>& taken) {
    return std::any_of(taken.begin(), taken.end(),
                       [&](const PhiSpan& b) { return a.begin < b.end && b.begin < a.end; });
}

void add_matches(std::string_view text, const std::regex& re, int group, const std::string& placeholder,
                 std::vector<PhiSpan>& out) {
    const std::string s(text);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
        const auto& m = *it;
        if (!m[group].matched || m.length(group) == 0) continue;
        PhiSpan span{static_cast<std::size_t>(m.position(group)),
                     static_cast<std::size_t>(m.position(group) + m.length(group)), placeholder};
        if (!overlaps(span, out)) out.push_back(span);
    }
}

}  // namespace

std::vector<PhiSpan> phi_regex_spans(std::string_view text) {
    std::vector<PhiSpan> out;
    for (const auto& rule : regex_rules()) add_matches(text, rule.re, rule.group, rule.placeholder, out);
    std::sort(out.begin(), out.end(), [](const PhiSpan& a, const PhiSpan& b) { return a.begin < b.begin; });
    return out;
}

std::vector<PhiSpan> HeuristicNer::find(std::string_view text) {
    static const std::regex kHonorific(R"(\b(?:Mr|Mrs|Ms|Miss|Dr|Prof)\.?\s+([A-Z][a-zA-Z'-]+(?:\s+[A-Z][a-zA-Z'-]+)?))");
    static const std::regex kOrg(
        R"(\b((?:St\.\s+)?(?:[A-Z][a-zA-Z'&-]+\s+){1,4}(?:Hospital|Clinic|University|College|School|Academy|Center|Centre|Institute|Corporation|Company|Inc|LLC|Church|Prison))\b)");
    static const std::regex kPlace(
        R"(\b(?:lives|lived|living|born|grew up|moved|resides|resided|raised)\s+(?:in|to)\s+([A-Z][a-zA-Z'-]+(?:\s+[A-Z][a-zA-Z'-]+){0,2}))");
    // "Jane Doe, a 34-year-old ..." and "Jane Doe is a 52-year-old ..."
    static const std::regex kIntroduced(
        R"(\b([A-Z][a-z'-]+\s+[A-Z][a-z'-]+)(?=,?\s+(?:is\s+|was\s+)?an?\s+\d{1,3}-year-old))");
    // a capitalized word after a locative preposition mid-sentence
    static const std::regex kInPlace(
        R"(([a-z,]\s+(?:in|from|near)\s+)([A-Z][a-z'-]+(?:\s+[A-Z][a-z'-]+){0,2}))");
    static const std::regex kNamed(R"(\b(?:named|called)\s+([A-Z][a-z'-]+(?:\s+[A-Z][a-z'-]+)?))");
    std::vector<PhiSpan> out;
    add_matches(text, kHonorific, 0, "[NAME]", out);
    add_matches(text, kNamed, 1, "[NAME]", out);
    add_matches(text, kIntroduced, 1, "[NAME]", out);
    add_matches(text, kOrg, 1, "[ORG]", out);
    add_matches(text, kPlace, 1, "[LOC]", out);
    add_matches(text, kInPlace, 2, "[LOC]", out);
    std::sort(out.begin(), out.end(), [](const PhiSpan& a, const PhiSpan& b) { return a.begin < b.begin; });
    return out;
}

PhiResult phi_mask(std::string_view text, NerBackend* ner) {
    PhiResult r;
    r.spans = phi_regex_spans(text);
    if (ner) {
        for (const auto& span : ner->find(text))
            if (span.begin < span.end && span.end <= text.size() && !overlaps(span, r.spans)) r.spans.push_back(span);
        std::sort(r.spans.begin(), r.spans.end(), [](const PhiSpan& a, const PhiSpan& b) { return a.begin < b.begin; });
    } else {
        r.flags.emplace_back("phi: no NER backend, regex-only mode");
    }
    std::size_t cursor = 0;
    for (const auto& s : r.spans) {
        r.text.append(text.substr(cursor, s.begin - cursor));
        r.text += s.placeholder;
        cursor = s.end;
    }
    r.text.append(text.substr(cursor));
    return r;
}

std::string sdc_rewrite(const std::string& text, Gateway& gw, const BaselineOptions& opt) {
    if (text::trim(text).empty()) throw Error("sdc_rewrite: empty input");
    const auto reply = complete_validated(
        gw, {"sdc_rewrite", {{"case_text", text}}, {{"case_id", opt.case_id}}, opt.sdc_temperature}, opt.max_attempts,
        [](const std::string& r) -> std::optional<std::string> {
            if (text::trim(r).empty()) return std::string("empty rewrite");
            return std::nullopt;
        });
    if (!reply.accepted) throw GatewayError("sdc_rewrite", "no usable rewrite");
    return text::trim(*reply.accepted);
}

LlmOnlyResult llm_only(const std::string& text, Gateway& gw, const BaselineOptions& opt) {
    if (text::trim(text).empty()) throw Error("llm_only: empty input");
    auto non_empty = [](const std::string& r) -> std::optional<std::string> {
        if (text::trim(r).empty()) return std::string("empty narrative");
        return std::nullopt;
    };
    LlmOnlyResult out;
    const auto draft = complete_validated(gw,
                                          {"llm_only_rewrite", {{"case_text", text}}, {{"case_id", opt.case_id}},
                                           temperature_for(Operator::llm_only_rewrite)},
                                          opt.max_attempts, non_empty);
    if (!draft.accepted) throw GatewayError("llm_only_rewrite", "no usable draft");
    out.draft = text::trim(*draft.accepted);
    const auto final_reply = complete_validated(gw,
                                                {"llm_only_critique", {{"draft_text", out.draft}},
                                                 {{"case_id", opt.case_id}}, temperature_for(Operator::llm_only_critique)},
                                                opt.max_attempts, non_empty);
    if (!final_reply.accepted) throw GatewayError("llm_only_critique", "no usable audited text");
    out.final_text = text::trim(*final_reply.accepted);
    return out;
}

}  // namespace anonpsy
