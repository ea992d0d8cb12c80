#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <regex>
#include <string>
#include <vector>

#include "anonpsy/gateway.hpp"
#include "anonpsy/graph.hpp"
#include "anonpsy/relations.hpp"
#include "anonpsy/similarity.hpp"
#include "anonpsy/yaml.hpp"

namespace anonpsy {

using Rng = std::mt19937_64;

/// Per-case generator seeded from (global seed, case id).
Rng case_rng(std::int64_t seed, std::string_view case_id);

/// Uniform integer in [0, n) by rejection sampling; n > 0.
std::uint64_t uniform_below(Rng& rng, std::uint64_t n);

/// Uniform real in [0, 1) from the top 53 bits of one draw.
double uniform_unit(Rng& rng);

struct PerturbConfig {
    int age_offset_bound_years = 3;
    double sex_flip_probability = 0.5;
    int steb_window_size = 3;
    double similarity_threshold = 0.85;
    int max_retries = 3;
    std::int64_t seed = 0;
    SimilarityBackend similarity = SimilarityBackend::embedding;
    double temperature = 0.7;
    std::vector<std::string> minor_occupations = {"student", "pupil", "schoolchild", "school",
                                                  "kindergarten", "preschool", "grade"};
    int minor_age = 16;
};

enum class ConstraintKind { min_present_age, max_onset_age, required_sex };

/// min_present_age: age >= value. max_onset_age: onset age < value. required_sex: sex == value.
struct FeasibilityRule {
    std::string diagnosis_pattern;
    ConstraintKind kind = ConstraintKind::min_present_age;
    std::string value;

    bool matches(std::string_view diagnosis_label) const;
};

struct ValuePool {
    std::string label;
    std::int64_t min = 0;
    std::int64_t max = 0;

    bool contains(std::int64_t v) const { return min <= v && v <= max; }
};

struct TestValuePool {
    std::string canonical_test;
    std::vector<std::string> aliases;
    std::vector<ValuePool> pools;
};

/// Scaffold contradiction entry: when `field` contains `when` (and not `unless`), the rewrite must
/// not contain any `forbid` phrase.
struct LexiconEntry {
    std::string field;
    std::string when;
    std::string unless;
    std::vector<std::string> forbid;
};

struct PerturbData {
    std::vector<FeasibilityRule> rules;
    std::vector<TestValuePool> test_pools;
    std::vector<LexiconEntry> scaffold_lexicon;
};

std::vector<FeasibilityRule> load_feasibility_rules(const std::filesystem::path& path);
std::vector<TestValuePool> load_test_value_pools(const std::filesystem::path& path);
std::vector<LexiconEntry> load_scaffold_lexicon(const std::filesystem::path& path);
/// Loads the three files from `dir`.
PerturbData load_perturb_data(const std::filesystem::path& dir);

/// Free-form audit trail: every redraw, rejection and flag of one case.
struct PerturbAudit {
    struct AgeDraw {
        std::int64_t offset;
        std::string verdict;
    };
    std::int64_t age_before = 0;
    std::int64_t age_after = 0;
    std::vector<AgeDraw> age_draws;
    std::string sex_before;
    std::string sex_after;
    std::string sex_decision;
    std::vector<std::string> rejections;
    std::vector<std::string> flags;
    std::vector<std::string> test_value_changes;
    std::vector<std::string> steb_order;

    yaml::Tree to_tree() const;
};

/// Onset age of a diagnosis: age + earliest start (days / 365) over linked symptoms and treatments.
std::optional<double> onset_age(const SemanticGraph& g, const DiagnosisNode& dx, std::int64_t age);

/// Durations tagged age_anchored start -years x 365 days later; those covering day 0 keep their end.
SemanticGraph shift_age_anchored(SemanticGraph g, std::int64_t years);

/// Violated rules (as messages) for the graph with its age moved by `offset` years.
std::vector<std::string> feasibility_violations(const SemanticGraph& g, const std::vector<FeasibilityRule>& rules,
                                                std::int64_t offset);

struct AgeResult {
    std::int64_t new_age = 0;
    std::int64_t offset = 0;
};

/// Draws a nonzero offset in [-bound, bound] until every rule holds; identity after 21 infeasible draws.
AgeResult perturb_age(const SemanticGraph& g, const PerturbConfig& cfg, const std::vector<FeasibilityRule>& rules,
                      Rng& rng, PerturbAudit& audit);

std::string perturb_sex(const SemanticGraph& g, const PerturbConfig& cfg, const std::vector<FeasibilityRule>& rules,
                        Rng& rng, PerturbAudit& audit);

struct IdentityFields {
    std::string ethnicity;
    std::string occupation;
};

/// Model-proposed ethnicity and occupation, validated against the originals and the minor-occupation
/// list. Keeps the originals when every attempt is rejected.
IdentityFields perturb_identity_fields(const SemanticGraph& g, std::int64_t new_age, const std::string& new_sex,
                                       Gateway& gw, const PerturbConfig& cfg, const std::string& case_id,
                                       PerturbAudit& audit, Embedder* embedder = nullptr);

/// Scaffold attributes that the visit rewrite must keep: legal status, arrival mode, setting, urgency.
std::map<std::string, std::string> visit_scaffold(const VisitEvent& v);

/// Contradictions between `text` and the scaffold, one message per hit.
std::vector<std::string> scaffold_contradictions(const std::map<std::string, std::string>& scaffold,
                                                 std::string_view text, const std::vector<LexiconEntry>& lexicon);

VisitEvent rewrite_visit_episode(const SemanticGraph& g, std::int64_t new_age, const std::string& new_sex,
                                 Gateway& gw, const PerturbConfig& cfg, const std::vector<LexiconEntry>& lexicon,
                                 const std::string& case_id, PerturbAudit& audit, Embedder* embedder = nullptr);

/// Rewrites every STEB frame in descending episode start, keeping the field set of each frame.
SemanticGraph rewrite_steb_contexts(const SemanticGraph& g, const std::string& visit_episode, std::int64_t age,
                                    Gateway& gw, const PerturbConfig& cfg, const std::string& case_id,
                                    PerturbAudit& audit, Embedder* embedder = nullptr);

/// Replaces integer test values in place with a draw from the same pool, never the original value.
CaseAttributes perturb_test_values(const CaseAttributes& attrs, const std::vector<TestValuePool>& inventory,
                                   Rng& rng, PerturbAudit& audit);

/// MSE domains mentioned in `text` (appearance, speech, mood/affect, ...).
std::vector<std::string> mse_domains(std::string_view text);

/// Minimal MSE edit; skipped when nothing changed. Rejects edits that drop an MSE domain.
std::string align_mse(const CaseAttributes& attrs, const std::vector<std::string>& essence_diff,
                      const std::vector<std::string>& rewritten_thoughts, Gateway& gw, const PerturbConfig& cfg,
                      const std::string& case_id, PerturbAudit& audit);

struct PerturbResult {
    SemanticGraph graph;
    PerturbAudit audit;
};

/// Operator P. Throws Error with the consistency report when the result disagrees with `g`.
PerturbResult perturb(const SemanticGraph& g, Gateway& gw, const PerturbConfig& cfg, const PerturbData& data,
                      const std::string& case_id, Embedder* embedder = nullptr);

}  // namespace anonpsy
