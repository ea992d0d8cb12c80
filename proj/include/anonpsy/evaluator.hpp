#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "anonpsy/gateway.hpp"
#include "anonpsy/similarity.hpp"
#include "anonpsy/stats.hpp"
#include "anonpsy/yaml.hpp"

namespace anonpsy {

/// Specifier patterns and synonym table used to canonicalize diagnosis labels.
struct DiagnosisCanon {
    std::vector<std::string> specifier_patterns;
    std::vector<std::regex> specifiers;  // compiled trailing-clause matchers
    std::map<std::string, std::string, std::less<>> synonyms;  // variant -> canonical

    void add_specifier(const std::string& pattern);
};

DiagnosisCanon load_diagnosis_canon(const std::filesystem::path& specifiers_yaml,
                                    const std::filesystem::path& synonyms_yaml);

/// Lowercase, strip trailing specifier clauses until none match, then map synonyms.
std::string canonicalize_diagnosis(std::string_view label, const DiagnosisCanon& canon);

/// Canonical labels, duplicates removed, first occurrence order kept.
std::vector<std::string> make_label_set(const std::vector<std::string>& labels, const DiagnosisCanon& canon);

/// Similarity of two canonical labels in [0, 1].
using LabelMatcher = std::function<double(const std::string&, const std::string&)>;
LabelMatcher exact_matcher();
/// 1 for equal labels, embedding cosine otherwise.
LabelMatcher embedding_matcher(Embedder& embedder);

struct SoftF1 {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::vector<std::pair<std::size_t, std::size_t>> matches;  // (pred index, gold index)
};

/// Greedy one-to-one matching of pairs scoring at least `theta`, best first, ties by (pred, gold) index.
SoftF1 soft_f1(const std::vector<std::string>& pred, const std::vector<std::string>& gold,
               const LabelMatcher& matcher, double theta = 0.8);

/// Parses one diagnosis per line, dropping bullets, numbering and blank lines.
std::vector<std::string> parse_diagnosis_list(std::string_view reply);

struct LlmCallOptions {
    std::string case_id;
    std::string variant;
    double temperature = 0.0;
    int max_attempts = 3;
};

std::vector<std::string> predict_diagnoses(const std::string& case_text, Gateway& gw, const LlmCallOptions& opt);

struct JudgeVerdict {
    char choice = 'A';  // version judged closer to the original
    int risk_a = 1;
    int risk_b = 1;
};

/// Parses "CHOICE:", "RISK_A:" and "RISK_B:" lines; nullopt when any is missing or out of range.
std::optional<JudgeVerdict> parse_judge_reply(std::string_view reply);

/// Insider judgment of two candidates. Throws GatewayError when no reply parses.
JudgeVerdict judge_risk(const std::string& original, const std::string& candidate_a, const std::string& candidate_b,
                        Gateway& gw, const LlmCallOptions& opt);

/// A risk score of 3 or more counts as at risk.
inline bool at_risk(int score) { return score >= 3; }

struct VariantMetrics {
    std::optional<double> cosine;  // to the original narrative
    std::optional<double> soft_f1;
    std::vector<std::string> predicted;
};

struct JudgeRecord {
    std::string candidate;  // variant compared against anonpsy
    bool anonpsy_is_a = true;
    JudgeVerdict verdict;
    int risk_anonpsy() const { return anonpsy_is_a ? verdict.risk_a : verdict.risk_b; }
    int risk_candidate() const { return anonpsy_is_a ? verdict.risk_b : verdict.risk_a; }
    bool anonpsy_chosen() const { return (verdict.choice == 'A') == anonpsy_is_a; }
};

struct CaseMetrics {
    std::string case_id;
    std::map<std::string, VariantMetrics> variants;
    std::optional<JudgeRecord> judge;
    std::vector<std::string> flags;
};

struct TestResult {
    std::string name;
    std::string statistic_name;
    double statistic = 0.0;
    double p = 1.0;
    std::optional<double> p_adjusted;
    std::string correction;  // "none" or "holm"
    std::size_t n = 0;
    std::string note;
};

struct PlanePoint {
    std::string variant;
    std::optional<double> mean_cosine;   // absent for the original
    std::optional<double> mean_soft_f1;  // absent when no prediction was scored
    std::size_t n = 0;
};

struct EvalReport {
    std::vector<CaseMetrics> cases;
    std::vector<PlanePoint> plane;
    std::vector<TestResult> tests;

    yaml::Tree to_tree() const;
    std::string to_yaml() const;
    /// One row per (case, variant).
    std::string to_csv() const;
};

/// Trade-off plane coordinates and corpus-level tests over per-case metrics.
void summarize(EvalReport& report);

}  // namespace anonpsy
