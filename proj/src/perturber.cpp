#include "anonpsy/perturber.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "anonpsy/structured.hpp"
#include "anonpsy/temporal.hpp"
#include "anonpsy/text.hpp"
#include "anonpsy/yaml_reader.hpp"

namespace anonpsy {

namespace {

constexpr int kMaxAgeDraws = 21;  // first draw plus 20 redraws

std::string join_fields(const StebContext& ctx) {
    std::vector<std::string> parts;
    for (StebField f : kStebFields)
        if (const auto& v = field(ctx, f)) parts.push_back(*v);
    return text::join(parts, " ");
}

std::string describe_frame(const StebContext& ctx) {
    std::string out;
    for (StebField f : kStebFields)
        if (const auto& v = field(ctx, f)) out += std::string(to_string(f)) + ": " + *v + "\n";
    if (!out.empty()) out.pop_back();
    return out;
}

ConstraintKind parse_kind(const std::string& s, const std::string& path) {
    if (s == "min_present_age") return ConstraintKind::min_present_age;
    if (s == "max_onset_age") return ConstraintKind::max_onset_age;
    if (s == "required_sex") return ConstraintKind::required_sex;
    throw ParseError(path, "unknown constraint kind '" + s + "'");
}

std::int64_t rule_number(const FeasibilityRule& r) { return std::stoll(r.value); }

std::string preserve_case(const std::string& original, std::string replacement) {
    if (!original.empty() && std::isupper(static_cast<unsigned char>(original[0])))
        return text::capitalize_first(replacement);
    return replacement;
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

struct NumberHit {
    std::size_t pos;
    std::size_t len;
    std::int64_t value;
    const TestValuePool* test;
};

/// First standalone integer after `from`, within the same clause. Numbers after '/' are skipped.
std::optional<NumberHit> next_integer(std::string_view s, std::size_t from, const TestValuePool* test) {
    constexpr std::size_t kWindow = 60;
    const std::size_t limit = std::min(s.size(), from + kWindow);
    for (std::size_t i = from; i < limit; ++i) {
        const char c = s[i];
        if (c == ';' || c == '\n') return std::nullopt;
        if (c == '.' && (i + 1 >= s.size() || !is_digit(s[i + 1]))) return std::nullopt;
        if (!is_digit(c)) continue;
        if (i > 0 && (is_digit(s[i - 1]) || std::isalpha(static_cast<unsigned char>(s[i - 1])))) continue;
        std::size_t j = i;
        while (j < s.size() && is_digit(s[j])) ++j;
        const bool after_slash = i > 0 && s[i - 1] == '/';
        const bool decimal = (j + 1 < s.size() && s[j] == '.' && is_digit(s[j + 1])) ||
                             (i > 0 && s[i - 1] == '.');
        const bool glued = j < s.size() && std::isalpha(static_cast<unsigned char>(s[j]));
        if (after_slash || decimal || glued || j - i > 6) {
            i = j;
            continue;
        }
        return NumberHit{i, j - i, std::stoll(std::string(s.substr(i, j - i))), test};
    }
    return std::nullopt;
}

std::string perturb_numbers(const std::string& field_name, const std::string& input,
                            const std::vector<TestValuePool>& inventory, Rng& rng, PerturbAudit& audit) {
    std::vector<NumberHit> hits;
    const std::string lower = text::to_lower(input);
    for (const auto& test : inventory) {
        for (const auto& alias : test.aliases) {
            const std::string a = text::to_lower(alias);
            for (auto pos = lower.find(a); pos != std::string::npos; pos = lower.find(a, pos + 1)) {
                const bool left = pos == 0 || !std::isalnum(static_cast<unsigned char>(lower[pos - 1]));
                const std::size_t end = pos + a.size();
                const bool right = end >= lower.size() || !std::isalnum(static_cast<unsigned char>(lower[end]));
                if (!left || !right) continue;
                if (auto hit = next_integer(input, end, &test)) hits.push_back(*hit);
            }
        }
    }
    std::sort(hits.begin(), hits.end(), [](const NumberHit& a, const NumberHit& b) { return a.pos < b.pos; });
    hits.erase(std::unique(hits.begin(), hits.end(), [](const NumberHit& a, const NumberHit& b) { return a.pos == b.pos; }),
               hits.end());

    std::string out;
    std::size_t cursor = 0;
    for (const auto& h : hits) {
        out.append(input, cursor, h.pos - cursor);
        cursor = h.pos + h.len;
        const std::string original = input.substr(h.pos, h.len);
        const auto pool = std::find_if(h.test->pools.begin(), h.test->pools.end(),
                                       [&](const ValuePool& p) { return p.contains(h.value); });
        if (pool == h.test->pools.end() || pool->max == pool->min) {
            audit.flags.push_back(field_name + ": " + h.test->canonical_test + " value " + original +
                                  (pool == h.test->pools.end() ? " outside all pools, unchanged" : " in a single-value pool, unchanged"));
            out += original;
            continue;
        }
        const auto width = static_cast<std::uint64_t>(pool->max - pool->min);  // size minus the original
        auto draw = pool->min + static_cast<std::int64_t>(uniform_below(rng, width));
        if (draw >= h.value) ++draw;
        out += std::to_string(draw);
        audit.test_value_changes.push_back(field_name + ": " + h.test->canonical_test + " " + original + " -> " +
                                           std::to_string(draw) + " (" + pool->label + ")");
    }
    out.append(input, cursor, std::string::npos);
    return out;
}

struct MseDomain {
    std::string_view name;
    std::vector<std::string_view> keywords;
};

const std::vector<MseDomain>& mse_domain_table() {
    static const std::vector<MseDomain> kDomains = {
        {"appearance", {"appearance", "appeared", "dressed", "groomed", "grooming", "hygiene", "unkempt", "disheveled"}},
        {"speech", {"speech", "spoke", "speaking"}},
        {"mood/affect", {"mood", "affect"}},
        {"thought process/content", {"thought process", "thought content", "thoughts", "delusion", "delusions",
                                     "tangential", "circumstantial", "goal-directed", "linear", "ideation"}},
        {"perception", {"perception", "perceptual", "hallucination", "hallucinations"}},
        {"orientation", {"oriented", "orientation", "disoriented"}},
        {"insight", {"insight"}},
        {"judgment", {"judgment", "judgement"}},
    };
    return kDomains;
}

std::string lines_or_none(const std::vector<std::string>& items) {
    if (items.empty()) return "(none)";
    std::string out;
    for (const auto& i : items) out += "- " + i + "\n";
    out.pop_back();
    return out;
}

}  // namespace

Rng case_rng(std::int64_t seed, std::string_view case_id) {
    const auto s = static_cast<std::uint64_t>(seed);
    const std::uint64_t h = text::fnv1a64(case_id);
    std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32),
                      static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    return Rng(seq);
}

std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
    if (n == 0) throw Error("uniform_below: empty range");
    const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t limit = max - (max % n + 1) % n;
    for (;;) {
        const std::uint64_t x = rng();
        if (x <= limit) return x % n;
    }
}

double uniform_unit(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

bool FeasibilityRule::matches(std::string_view diagnosis_label) const {
    const std::regex re(diagnosis_pattern, std::regex::icase | std::regex::ECMAScript);
    return std::regex_search(diagnosis_label.begin(), diagnosis_label.end(), re);
}

std::vector<FeasibilityRule> load_feasibility_rules(const std::filesystem::path& path) {
    const yaml::Tree doc = yaml::parse_file(path);
    yaml::MapReader top(doc, path.string(), {"rules"});
    std::vector<FeasibilityRule> out;
    const auto& list = top.list("rules");
    for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string p = path.string() + ":rules[" + std::to_string(i) + "]";
        yaml::MapReader r(list[i], p, {"pattern", "kind", "value"});
        FeasibilityRule rule{r.str("pattern"), parse_kind(r.str("kind"), r.path("kind")), r.str("value")};
        if (rule.diagnosis_pattern.empty()) throw ParseError(r.path("pattern"), "empty pattern");
        try {
            std::regex(rule.diagnosis_pattern, std::regex::icase);
        } catch (const std::regex_error&) {
            throw ParseError(r.path("pattern"), "invalid regex");
        }
        if (rule.kind == ConstraintKind::required_sex) {
            if (rule.value != "male" && rule.value != "female") throw ParseError(r.path("value"), "expected male or female");
        } else {
            const auto v = r.integer("value");
            if (v < 0 || v > 120) throw ParseError(r.path("value"), "age outside 0..120");
        }
        out.push_back(std::move(rule));
    }
    return out;
}

std::vector<TestValuePool> load_test_value_pools(const std::filesystem::path& path) {
    const yaml::Tree doc = yaml::parse_file(path);
    yaml::MapReader top(doc, path.string(), {"tests"});
    std::vector<TestValuePool> out;
    const auto& list = top.list("tests");
    for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string p = path.string() + ":tests[" + std::to_string(i) + "]";
        yaml::MapReader r(list[i], p, {"name", "aliases", "pools"});
        TestValuePool t{r.str("name"), r.str_list("aliases"), {}};
        if (t.aliases.empty()) t.aliases.push_back(t.canonical_test);
        const auto& pools = r.list("pools");
        for (std::size_t j = 0; j < pools.size(); ++j) {
            yaml::MapReader pr(pools[j], p + ".pools[" + std::to_string(j) + "]", {"label", "min", "max"});
            ValuePool vp{pr.str_or("label", ""), pr.integer("min"), pr.integer("max")};
            if (vp.max - vp.min < 1) throw ParseError(pr.path("max"), "pool needs at least two values");
            for (const auto& other : t.pools)
                if (vp.min <= other.max && other.min <= vp.max) throw ParseError(pr.path("min"), "pools overlap");
            t.pools.push_back(std::move(vp));
        }
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<LexiconEntry> load_scaffold_lexicon(const std::filesystem::path& path) {
    const yaml::Tree doc = yaml::parse_file(path);
    yaml::MapReader top(doc, path.string(), {"entries"});
    std::vector<LexiconEntry> out;
    const auto& list = top.list("entries");
    for (std::size_t i = 0; i < list.size(); ++i) {
        yaml::MapReader r(list[i], path.string() + ":entries[" + std::to_string(i) + "]",
                          {"field", "when", "unless", "forbid"});
        out.push_back({r.str("field"), r.str("when"), r.str_or("unless", ""), r.str_list("forbid")});
    }
    return out;
}

PerturbData load_perturb_data(const std::filesystem::path& dir) {
    return {load_feasibility_rules(dir / "feasibility_rules.yaml"), load_test_value_pools(dir / "test_value_pools.yaml"),
            load_scaffold_lexicon(dir / "scaffold_lexicon.yaml")};
}

yaml::Tree PerturbAudit::to_tree() const {
    yaml::Tree t = yaml::Tree::object();
    t["age"] = yaml::Tree::object();
    t["age"]["before"] = age_before;
    t["age"]["after"] = age_after;
    t["age"]["draws"] = yaml::Tree::array();
    for (const auto& d : age_draws) {
        yaml::Tree e = yaml::Tree::object();
        e["offset"] = d.offset;
        e["verdict"] = d.verdict;
        t["age"]["draws"].push_back(std::move(e));
    }
    t["sex"] = yaml::Tree::object();
    t["sex"]["before"] = sex_before;
    t["sex"]["after"] = sex_after;
    t["sex"]["decision"] = sex_decision;
    auto list = [](const std::vector<std::string>& v) {
        yaml::Tree a = yaml::Tree::array();
        for (const auto& s : v) a.push_back(s);
        return a;
    };
    t["test_values"] = list(test_value_changes);
    t["steb_order"] = list(steb_order);
    t["rejections"] = list(rejections);
    t["flags"] = list(flags);
    return t;
}

std::optional<double> onset_age(const SemanticGraph& g, const DiagnosisNode& dx, std::int64_t age) {
    std::optional<Day> earliest;
    auto consider = [&](const std::vector<std::string>* ids) {
        if (!ids) return;
        for (const auto& id : *ids)
            if (const auto* d = g.find_duration(id)) earliest = earliest ? std::min(*earliest, d->start()) : d->start();
    };
    for (const auto& r : g.relations) {
        if (r.target != dx.id) continue;
        if (r.type == RelationType::manifests_as || r.type == RelationType::treatment_of) consider(duration_refs(g, r.source));
    }
    if (!earliest) return std::nullopt;
    return static_cast<double>(age) + static_cast<double>(*earliest) / 365.0;
}

SemanticGraph shift_age_anchored(SemanticGraph g, std::int64_t years) {
    if (years == 0) return g;
    for (auto& d : g.durations) {
        if (!d.age_anchored) continue;
        const bool ongoing = d.covers(0);
        const Day end = d.end();
        d.offset_days -= years * 365;
        if (ongoing) d.span_days = end - d.offset_days;  // still ends where it did
    }
    return g;
}

std::vector<std::string> feasibility_violations(const SemanticGraph& g, const std::vector<FeasibilityRule>& rules,
                                                std::int64_t offset) {
    std::vector<std::string> out;
    const std::int64_t age = g.attributes.demographics.age + offset;
    if (age < 0) out.push_back("age would be negative");
    const SemanticGraph shifted = shift_age_anchored(g, offset);
    for (const auto& rule : rules) {
        if (rule.kind == ConstraintKind::required_sex) continue;
        for (const auto& dx : shifted.diagnoses) {
            if (!rule.matches(dx.label)) continue;
            const auto v = rule_number(rule);
            if (rule.kind == ConstraintKind::min_present_age && age < v)
                out.push_back(dx.label + " requires age >= " + rule.value);
            if (rule.kind == ConstraintKind::max_onset_age) {
                const auto onset = onset_age(shifted, dx, age);
                if (onset && !(*onset < static_cast<double>(v)))
                    out.push_back(dx.label + " requires onset before age " + rule.value);
            }
        }
    }
    const bool has_anchored = std::any_of(g.durations.begin(), g.durations.end(),
                                          [](const DurationInterval& d) { return d.age_anchored; });
    if (has_anchored && offset != 0 && validate_canonical(g).empty() &&
        !(validate_graph(shifted).empty() && validate_canonical(shifted).empty()))
        out.push_back("age-anchored shift breaks the reconciled timeline");
    return out;
}

AgeResult perturb_age(const SemanticGraph& g, const PerturbConfig& cfg, const std::vector<FeasibilityRule>& rules,
                      Rng& rng, PerturbAudit& audit) {
    const std::int64_t age = g.attributes.demographics.age;
    audit.age_before = age;
    audit.age_after = age;
    const auto bound = static_cast<std::uint64_t>(std::max(1, cfg.age_offset_bound_years));
    for (int i = 0; i < kMaxAgeDraws; ++i) {
        const auto idx = uniform_below(rng, 2 * bound);
        const std::int64_t offset = idx < bound ? -static_cast<std::int64_t>(bound - idx)
                                                : static_cast<std::int64_t>(idx - bound + 1);
        const auto violations = feasibility_violations(g, rules, offset);
        if (violations.empty()) {
            audit.age_draws.push_back({offset, "accepted"});
            audit.age_after = age + offset;
            return {age + offset, offset};
        }
        audit.age_draws.push_back({offset, text::join(violations, "; ")});
    }
    audit.flags.push_back("age: no feasible offset after " + std::to_string(kMaxAgeDraws) + " draws, unchanged");
    return {age, 0};
}

std::string perturb_sex(const SemanticGraph& g, const PerturbConfig& cfg, const std::vector<FeasibilityRule>& rules,
                        Rng& rng, PerturbAudit& audit) {
    const std::string sex = g.attributes.demographics.sex;
    audit.sex_before = sex;
    audit.sex_after = sex;
    const std::string lower = text::to_lower(text::trim(sex));
    if (lower != "male" && lower != "female") {
        audit.sex_decision = "unchanged (not male/female)";
        return sex;
    }
    for (const auto& rule : rules) {
        if (rule.kind != ConstraintKind::required_sex) continue;
        for (const auto& dx : g.diagnoses) {
            if (!rule.matches(dx.label)) continue;
            audit.sex_decision = "pinned to " + rule.value + " by " + dx.label;
            if (rule.value != lower) audit.flags.push_back("sex: recorded sex disagrees with " + dx.label);
            return sex;
        }
    }
    if (uniform_unit(rng) < cfg.sex_flip_probability) {
        const std::string flipped = preserve_case(sex, lower == "male" ? "female" : "male");
        audit.sex_decision = "flipped";
        audit.sex_after = flipped;
        return flipped;
    }
    audit.sex_decision = "kept";
    return sex;
}

IdentityFields perturb_identity_fields(const SemanticGraph& g, std::int64_t new_age, const std::string& new_sex,
                                       Gateway& gw, const PerturbConfig& cfg, const std::string& case_id,
                                       PerturbAudit& audit, Embedder* /*embedder*/) {
    const auto& d = g.attributes.demographics;
    IdentityFields original{d.ethnicity, d.occupation};
    if (text::trim(d.ethnicity).empty() && text::trim(d.occupation).empty()) return original;

    IdentityFields proposal;
    const auto reply = complete_validated(
        gw,
        {"identity_fields",
         {{"age", std::to_string(new_age)}, {"sex", new_sex}, {"ethnicity", d.ethnicity}, {"occupation", d.occupation}},
         {{"case_id", case_id}},
         cfg.temperature},
        1 + cfg.max_retries, [&](const std::string& text) -> std::optional<std::string> {
            Json obj;
            try {
                obj = parse_json_reply(text);
            } catch (const Error& e) {
                return std::string(e.what());
            }
            std::vector<std::string> warnings;
            drop_unknown_keys(obj, {"ethnicity", "occupation"}, "identity_fields", warnings);
            for (auto& w : warnings) audit.flags.push_back(w);
            proposal = {text::trim(json_text(obj, "ethnicity").value_or("")),
                        text::trim(json_text(obj, "occupation").value_or(""))};
            if (!text::trim(d.ethnicity).empty()) {
                if (proposal.ethnicity.empty()) return std::string("ethnicity missing");
                if (text::to_lower(proposal.ethnicity) == text::to_lower(text::trim(d.ethnicity)))
                    return std::string("ethnicity unchanged");
            } else {
                proposal.ethnicity = d.ethnicity;
            }
            if (!text::trim(d.occupation).empty()) {
                if (proposal.occupation.empty()) return std::string("occupation missing");
                if (text::to_lower(proposal.occupation) == text::to_lower(text::trim(d.occupation)))
                    return std::string("occupation unchanged");
                if (new_age < cfg.minor_age &&
                    std::none_of(cfg.minor_occupations.begin(), cfg.minor_occupations.end(),
                                 [&](const std::string& w) { return text::contains_word_ci(proposal.occupation, w); }))
                    return "occupation '" + proposal.occupation + "' not permitted for age " + std::to_string(new_age);
            } else {
                proposal.occupation = d.occupation;
            }
            return std::nullopt;
        });
    for (const auto& r : reply.rejections) audit.rejections.push_back("identity_fields: " + r);
    if (!reply.accepted) {
        audit.flags.push_back("identity_fields: all proposals rejected, originals kept");
        return original;
    }
    return proposal;
}

std::map<std::string, std::string> visit_scaffold(const VisitEvent& v) {
    return {{"legal_status", v.legal_status},
            {"arrival_mode", v.arrival_mode},
            {"setting", v.setting},
            {"urgency", v.safety_flags.empty() ? "routine" : "urgent"}};
}

std::vector<std::string> scaffold_contradictions(const std::map<std::string, std::string>& scaffold,
                                                 std::string_view candidate, const std::vector<LexiconEntry>& lexicon) {
    std::vector<std::string> out;
    for (const auto& e : lexicon) {
        auto it = scaffold.find(e.field);
        if (it == scaffold.end() || !text::contains_ci(it->second, e.when)) continue;
        if (!e.unless.empty() && text::contains_ci(it->second, e.unless)) continue;
        for (const auto& phrase : e.forbid)
            if (text::contains_word_ci(candidate, phrase))
                out.push_back(e.field + " '" + it->second + "' contradicts '" + phrase + "'");
    }
    return out;
}

VisitEvent rewrite_visit_episode(const SemanticGraph& g, std::int64_t new_age, const std::string& new_sex,
                                 Gateway& gw, const PerturbConfig& cfg, const std::vector<LexiconEntry>& lexicon,
                                 const std::string& case_id, PerturbAudit& audit, Embedder* embedder) {
    const VisitEvent& v = g.visit_event;
    if (text::trim(v.visit_episode).empty()) return v;
    const auto scaffold = visit_scaffold(v);

    VisitEvent proposal = v;
    const auto reply = complete_validated(
        gw,
        {"visit_rewrite",
         {{"legal_status", v.legal_status},
          {"arrival_mode", v.arrival_mode},
          {"setting", v.setting},
          {"urgency", scaffold.at("urgency")},
          {"age", std::to_string(new_age)},
          {"sex", new_sex},
          {"visit_episode", v.visit_episode},
          {"pathway", v.pathway.value_or("(none)")}},
         {{"case_id", case_id}},
         cfg.temperature},
        1 + cfg.max_retries, [&](const std::string& text) -> std::optional<std::string> {
            Json obj;
            try {
                obj = parse_json_reply(text);
            } catch (const Error& e) {
                return std::string(e.what());
            }
            std::vector<std::string> warnings;
            drop_unknown_keys(obj, {"visit_episode", "pathway"}, "visit_rewrite", warnings);
            for (auto& w : warnings) audit.flags.push_back(w);
            const std::string episode = text::trim(json_text(obj, "visit_episode").value_or(""));
            if (episode.empty()) return std::string("visit_episode missing");
            const auto gate = similarity_gate(v.visit_episode, episode, cfg.similarity_threshold, cfg.similarity, embedder);
            if (!gate.accepted) return "too similar to the original (" + std::to_string(gate.score) + ")";
            std::optional<std::string> pathway = v.pathway;
            if (v.pathway)
                if (auto p = json_text(obj, "pathway"); p && !text::trim(*p).empty()) pathway = text::trim(*p);
            auto hits = scaffold_contradictions(scaffold, episode, lexicon);
            if (pathway) {
                auto more = scaffold_contradictions(scaffold, *pathway, lexicon);
                hits.insert(hits.end(), more.begin(), more.end());
            }
            if (!hits.empty()) return "scaffold contradiction: " + text::join(hits, "; ");
            proposal.visit_episode = episode;
            proposal.pathway = pathway;
            return std::nullopt;
        });
    for (const auto& r : reply.rejections) audit.rejections.push_back("visit_rewrite: " + r);
    if (!reply.accepted) {
        audit.flags.push_back("visit_rewrite: all rewrites rejected, original kept");
        return v;
    }
    return proposal;
}

SemanticGraph rewrite_steb_contexts(const SemanticGraph& g, const std::string& visit_episode, std::int64_t age,
                                    Gateway& gw, const PerturbConfig& cfg, const std::string& case_id,
                                    PerturbAudit& audit, Embedder* embedder) {
    struct Slot {
        std::size_t symptom;
        std::size_t context;
        Day start;
    };
    SemanticGraph out = g;
    std::vector<Slot> slots;
    for (std::size_t i = 0; i < out.symptoms.size(); ++i) {
        Day start = 0;
        bool have = false;
        for (const auto& id : out.symptoms[i].duration_ids)
            if (const auto* d = out.find_duration(id)) {
                start = have ? std::min(start, d->start()) : d->start();
                have = true;
            }
        for (std::size_t c = 0; c < out.symptoms[i].contexts.size(); ++c) slots.push_back({i, c, start});
    }
    std::sort(slots.begin(), slots.end(), [&](const Slot& a, const Slot& b) {
        if (a.start != b.start) return a.start > b.start;
        if (out.symptoms[a.symptom].id != out.symptoms[b.symptom].id)
            return out.symptoms[a.symptom].id < out.symptoms[b.symptom].id;
        return a.context < b.context;
    });

    std::vector<std::string> edited;
    for (const auto& slot : slots) {
        SymptomNode& node = out.symptoms[slot.symptom];
        const StebContext original = node.contexts[slot.context];
        const std::string tag = node.id + "#" + std::to_string(slot.context);
        audit.steb_order.push_back(tag + " start " + std::to_string(slot.start));

        std::vector<std::string> window;
        const std::size_t k = static_cast<std::size_t>(std::max(0, cfg.steb_window_size));
        for (std::size_t i = edited.size() > k ? edited.size() - k : 0; i < edited.size(); ++i) window.push_back(edited[i]);

        const auto age_at = std::max<std::int64_t>(
            0, std::llround(static_cast<double>(age) + static_cast<double>(slot.start) / 365.0));
        StebContext proposal;
        ValidatedReply reply;
        try {
            reply = complete_validated(
                gw,
                {"steb_rewrite",
                 {{"symptom", node.symptom},
                  {"age_at_event", std::to_string(age_at)},
                  {"visit_episode", visit_episode},
                  {"window", lines_or_none(window)},
                  {"fields", describe_frame(original)}},
                 {{"case_id", case_id}, {"node_id", node.id}, {"context", std::to_string(slot.context)}},
                 cfg.temperature},
                1 + cfg.max_retries, [&](const std::string& text) -> std::optional<std::string> {
                    Json obj;
                    try {
                        obj = parse_json_reply(text);
                    } catch (const Error& e) {
                        return std::string(e.what());
                    }
                    proposal = StebContext{};
                    for (StebField f : kStebFields) {
                        const auto value = json_text(obj, to_string(f));
                        if (!field(original, f)) {
                            if (value) audit.flags.push_back(tag + ": dropped added field " + std::string(to_string(f)));
                            continue;
                        }
                        if (!value || text::trim(*value).empty()) return "missing field " + std::string(to_string(f));
                        field(proposal, f) = text::trim(*value);
                    }
                    const auto gate = similarity_gate(join_fields(original), join_fields(proposal),
                                                      cfg.similarity_threshold, cfg.similarity, embedder);
                    if (!gate.accepted) return "too similar to the original (" + std::to_string(gate.score) + ")";
                    return std::nullopt;
                });
        } catch (const GatewayError& e) {
            audit.flags.push_back(tag + ": gateway failure, original kept: " + e.what());
            continue;
        }
        for (const auto& r : reply.rejections) audit.rejections.push_back("steb_rewrite " + tag + ": " + r);
        if (!reply.accepted) {
            audit.flags.push_back(tag + ": all rewrites rejected, original kept");
            continue;
        }
        node.contexts[slot.context] = proposal;
        edited.push_back(node.symptom + ": " + text::replace_all(describe_frame(proposal), "\n", "; "));
    }
    return out;
}

CaseAttributes perturb_test_values(const CaseAttributes& attrs, const std::vector<TestValuePool>& inventory,
                                   Rng& rng, PerturbAudit& audit) {
    CaseAttributes out = attrs;
    out.test_results.labs = perturb_numbers("labs", attrs.test_results.labs, inventory, rng, audit);
    out.test_results.imaging = perturb_numbers("imaging", attrs.test_results.imaging, inventory, rng, audit);
    out.test_results.mental_status = perturb_numbers("mental_status", attrs.test_results.mental_status, inventory, rng, audit);
    out.test_results.other = perturb_numbers("other", attrs.test_results.other, inventory, rng, audit);
    return out;
}

std::vector<std::string> mse_domains(std::string_view text) {
    std::vector<std::string> out;
    for (const auto& d : mse_domain_table())
        if (std::any_of(d.keywords.begin(), d.keywords.end(), [&](std::string_view k) { return text::contains_word_ci(text, k); }))
            out.emplace_back(d.name);
    return out;
}

std::string align_mse(const CaseAttributes& attrs, const std::vector<std::string>& essence_diff,
                      const std::vector<std::string>& rewritten_thoughts, Gateway& gw, const PerturbConfig& cfg,
                      const std::string& case_id, PerturbAudit& audit) {
    const std::string& mse = attrs.test_results.mental_status;
    if (text::trim(mse).empty() || (essence_diff.empty() && rewritten_thoughts.empty())) return mse;
    const auto required = mse_domains(mse);
    try {
        const auto reply = complete_validated(
            gw,
            {"mse_align",
             {{"changes", lines_or_none(essence_diff)}, {"thoughts", lines_or_none(rewritten_thoughts)}, {"mental_status", mse}},
             {{"case_id", case_id}},
             cfg.temperature},
            1 + cfg.max_retries, [&](const std::string& text) -> std::optional<std::string> {
                if (text::trim(text).empty()) return std::string("empty");
                const auto kept = mse_domains(text);
                for (const auto& d : required)
                    if (std::find(kept.begin(), kept.end(), d) == kept.end()) return "dropped the " + d + " finding";
                return std::nullopt;
            });
        for (const auto& r : reply.rejections) audit.rejections.push_back("mse_align: " + r);
        if (reply.accepted) return text::trim(*reply.accepted);
        audit.flags.push_back("mse_align: all edits rejected, original kept");
    } catch (const GatewayError& e) {
        audit.flags.push_back(std::string("mse_align: gateway failure, original kept: ") + e.what());
    }
    return mse;
}

PerturbResult perturb(const SemanticGraph& g, Gateway& gw, const PerturbConfig& cfg, const PerturbData& data,
                      const std::string& case_id, Embedder* embedder) {
    PerturbResult result;
    PerturbAudit& audit = result.audit;
    Rng rng = case_rng(cfg.seed, case_id);

    const AgeResult age = perturb_age(g, cfg, data.rules, rng, audit);
    const std::string sex = perturb_sex(g, cfg, data.rules, rng, audit);
    const IdentityFields identity = perturb_identity_fields(g, age.new_age, sex, gw, cfg, case_id, audit, embedder);
    const VisitEvent visit = rewrite_visit_episode(g, age.new_age, sex, gw, cfg, data.scaffold_lexicon, case_id, audit, embedder);

    SemanticGraph out = shift_age_anchored(g, age.offset);
    auto& demo = out.attributes.demographics;
    demo.age = age.new_age;
    demo.sex = sex;
    demo.ethnicity = identity.ethnicity;
    demo.occupation = identity.occupation;
    out.visit_event = visit;

    out = rewrite_steb_contexts(out, visit.visit_episode, age.new_age, gw, cfg, case_id, audit, embedder);
    out.attributes = perturb_test_values(out.attributes, data.test_pools, rng, audit);

    const auto& before = g.attributes.demographics;
    std::vector<std::string> diff;
    if (before.age != demo.age) diff.push_back("age: " + std::to_string(before.age) + " -> " + std::to_string(demo.age));
    if (before.sex != demo.sex) diff.push_back("sex: " + before.sex + " -> " + demo.sex);
    if (before.ethnicity != demo.ethnicity) diff.push_back("ethnicity: " + before.ethnicity + " -> " + demo.ethnicity);
    if (before.occupation != demo.occupation) diff.push_back("occupation: " + before.occupation + " -> " + demo.occupation);
    if (g.visit_event.visit_episode != visit.visit_episode) diff.push_back("visit episode: " + visit.visit_episode);

    std::vector<std::string> thoughts;
    for (std::size_t i = 0; i < out.symptoms.size(); ++i)
        for (std::size_t c = 0; c < out.symptoms[i].contexts.size(); ++c) {
            const auto& now = out.symptoms[i].contexts[c].thought;
            if (now && now != g.symptoms[i].contexts[c].thought) thoughts.push_back(*now);
        }
    out.attributes.test_results.mental_status = align_mse(out.attributes, diff, thoughts, gw, cfg, case_id, audit);

    const auto report = check_consistency(shift_age_anchored(g, age.offset), out);
    if (!report.passed())
        throw Error("perturbation broke graph consistency: " + text::join(report.discrepancies, "; "));
    if (auto v = validate_graph(out); !v.empty()) throw Error("perturbed graph is invalid:\n" + format_report(v));
    out.sort_canonical();
    result.graph = std::move(out);
    return result;
}

}  // namespace anonpsy
