#include "anonpsy/evaluator.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "anonpsy/error.hpp"
#include "anonpsy/text.hpp"
#include "anonpsy/yaml_reader.hpp"

namespace anonpsy {

namespace {

const char* const kVariantOrder[] = {"original", "anonpsy", "phi", "sdc", "llm_only"};

int variant_rank(const std::string& v) {
    for (int i = 0; i < 5; ++i)
        if (v == kVariantOrder[i]) return i;
    return 5;
}

std::vector<std::string> sorted_variants(const std::set<std::string>& vs) {
    std::vector<std::string> out(vs.begin(), vs.end());
    std::stable_sort(out.begin(), out.end(),
                     [](const std::string& a, const std::string& b) { return variant_rank(a) < variant_rank(b); });
    return out;
}

std::string csv_number(const std::optional<double>& v) { return v ? fmt::format("{:.6f}", *v) : std::string(); }

std::optional<int> parse_score(const std::string& s) {
    const std::string t = text::trim(s);
    if (t.empty() || t[0] < '1' || t[0] > '5') return std::nullopt;
    if (t.size() > 1 && std::isdigit(static_cast<unsigned char>(t[1]))) return std::nullopt;
    return t[0] - '0';
}

}  // namespace

void DiagnosisCanon::add_specifier(const std::string& pattern) {
    specifier_patterns.push_back(pattern);
    // A trailing clause after , ; or a spaced dash, or a final parenthetical.
    specifiers.emplace_back("(\\s*[,;]\\s*|\\s+[-–—]\\s+)(" + pattern + ")\\s*$|\\s*\\((" + pattern + ")\\)\\s*$",
                            std::regex::icase | std::regex::ECMAScript);
}

DiagnosisCanon load_diagnosis_canon(const std::filesystem::path& specifiers_yaml,
                                    const std::filesystem::path& synonyms_yaml) {
    DiagnosisCanon canon;
    {
        const auto doc = yaml::parse_file(specifiers_yaml);
        yaml::MapReader r(doc, specifiers_yaml.string(), {"specifiers"});
        for (const auto& p : r.str_list("specifiers")) {
            try {
                canon.add_specifier(p);
            } catch (const std::regex_error&) {
                throw ParseError(r.path("specifiers"), "invalid regex '" + p + "'");
            }
        }
    }
    {
        const auto doc = yaml::parse_file(synonyms_yaml);
        yaml::MapReader r(doc, synonyms_yaml.string(), {"synonyms"});
        const auto& map = r.child("synonyms");
        if (!map.is_object()) throw ParseError(r.path("synonyms"), "expected a mapping");
        for (const auto& [canonical, variants] : map.items()) {
            const std::string c = text::normalize_ws(text::to_lower(canonical));
            canon.synonyms[c] = c;
            if (!variants.is_array()) throw ParseError(r.path("synonyms") + "." + canonical, "expected a list");
            for (const auto& v : variants) {
                const std::string key = text::normalize_ws(text::to_lower(yaml::as_string(v, r.path("synonyms"))));
                if (auto it = canon.synonyms.find(key); it != canon.synonyms.end() && it->second != c)
                    throw ParseError(r.path("synonyms"), "'" + key + "' maps to two canonical labels");
                canon.synonyms[key] = c;
            }
        }
    }
    return canon;
}

std::string canonicalize_diagnosis(std::string_view label, const DiagnosisCanon& canon) {
    std::string s = text::normalize_ws(text::to_lower(label));
    for (bool changed = true; changed;) {
        changed = false;
        for (const auto& re : canon.specifiers) {
            std::smatch m;
            if (std::regex_search(s, m, re) && m.position(0) > 0) {
                s = text::trim(s.substr(0, static_cast<std::size_t>(m.position(0))));
                changed = true;
            }
        }
        while (!s.empty() && (s.back() == ',' || s.back() == ';')) {
            s.pop_back();
            s = text::trim(s);
            changed = true;
        }
    }
    if (auto it = canon.synonyms.find(s); it != canon.synonyms.end()) return it->second;
    return s;
}

std::vector<std::string> make_label_set(const std::vector<std::string>& labels, const DiagnosisCanon& canon) {
    std::vector<std::string> out;
    for (const auto& l : labels) {
        std::string c = canonicalize_diagnosis(l, canon);
        if (!c.empty() && std::find(out.begin(), out.end(), c) == out.end()) out.push_back(std::move(c));
    }
    return out;
}

LabelMatcher exact_matcher() {
    return [](const std::string& a, const std::string& b) { return a == b ? 1.0 : 0.0; };
}

LabelMatcher embedding_matcher(Embedder& embedder) {
    return [&embedder](const std::string& a, const std::string& b) {
        if (a == b) return 1.0;
        return std::max(0.0, doc_similarity(a, b, embedder));
    };
}

SoftF1 soft_f1(const std::vector<std::string>& pred, const std::vector<std::string>& gold, const LabelMatcher& matcher,
               double theta) {
    SoftF1 out;
    if (pred.empty() && gold.empty()) {
        out.precision = out.recall = out.f1 = 1.0;
        return out;
    }
    if (pred.empty() || gold.empty()) return out;
    struct Candidate {
        double score;
        std::size_t p;
        std::size_t g;
    };
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < pred.size(); ++i)
        for (std::size_t j = 0; j < gold.size(); ++j)
            if (const double s = matcher(pred[i], gold[j]); s >= theta) cands.push_back({s, i, j});
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.p != b.p) return a.p < b.p;
        return a.g < b.g;
    });
    std::vector<bool> used_p(pred.size()), used_g(gold.size());
    for (const auto& c : cands) {
        if (used_p[c.p] || used_g[c.g]) continue;
        used_p[c.p] = used_g[c.g] = true;
        out.matches.emplace_back(c.p, c.g);
    }
    const double m = static_cast<double>(out.matches.size());
    out.precision = m / static_cast<double>(pred.size());
    out.recall = m / static_cast<double>(gold.size());
    out.f1 = m == 0.0 ? 0.0 : 2.0 * out.precision * out.recall / (out.precision + out.recall);
    return out;
}

std::vector<std::string> parse_diagnosis_list(std::string_view reply) {
    std::vector<std::string> out;
    std::string line;
    auto flush = [&] {
        std::string t = text::trim(line);
        line.clear();
        std::size_t i = 0;
        for (bool more = true; more && i < t.size();) {
            if (t[i] == '-' || t[i] == '*' || std::isspace(static_cast<unsigned char>(t[i]))) {
                ++i;
            } else if (t.compare(i, 3, "\xe2\x80\xa2") == 0) {
                i += 3;
            } else {
                more = false;
            }
        }
        std::size_t j = i;
        while (j < t.size() && std::isdigit(static_cast<unsigned char>(t[j]))) ++j;
        if (j > i && j < t.size() && (t[j] == '.' || t[j] == ')')) i = j + 1;
        t = text::trim(t.substr(i));
        if (!t.empty()) out.push_back(t);
    };
    for (char c : reply) {
        if (c == '\n') {
            flush();
        } else {
            line.push_back(c);
        }
    }
    flush();
    return out;
}

std::vector<std::string> predict_diagnoses(const std::string& case_text, Gateway& gw, const LlmCallOptions& opt) {
    const auto reply = complete_validated(
        gw,
        {"predict_diagnoses", {{"case_text", case_text}}, {{"case_id", opt.case_id}, {"variant", opt.variant}},
         opt.temperature},
        opt.max_attempts, [](const std::string& r) -> std::optional<std::string> {
            if (parse_diagnosis_list(r).empty()) return std::string("no diagnoses listed");
            return std::nullopt;
        });
    if (!reply.accepted) throw GatewayError("predict_diagnoses", "no usable diagnosis list");
    return parse_diagnosis_list(*reply.accepted);
}

std::optional<JudgeVerdict> parse_judge_reply(std::string_view reply) {
    std::optional<char> choice;
    std::optional<int> a, b;
    std::string line;
    auto take = [&] {
        std::string t = text::trim(line);
        line.clear();
        std::string clean;
        for (char c : t)
            if (c != '*' && c != '`') clean.push_back(c);
        const auto colon = clean.find(':');
        if (colon == std::string::npos) return;
        const std::string key = text::to_lower(text::trim(clean.substr(0, colon)));
        const std::string value = text::trim(clean.substr(colon + 1));
        if (key == "choice") {
            const std::string v = text::to_lower(value);
            if (v == "a" || v == "version a") choice = 'A';
            if (v == "b" || v == "version b") choice = 'B';
        } else if (key == "risk_a") {
            a = parse_score(value);
        } else if (key == "risk_b") {
            b = parse_score(value);
        }
    };
    for (char c : reply) {
        if (c == '\n') {
            take();
        } else {
            line.push_back(c);
        }
    }
    take();
    if (!choice || !a || !b) return std::nullopt;
    return JudgeVerdict{*choice, *a, *b};
}

JudgeVerdict judge_risk(const std::string& original, const std::string& candidate_a, const std::string& candidate_b,
                        Gateway& gw, const LlmCallOptions& opt) {
    const auto reply = complete_validated(
        gw,
        {"judge_risk",
         {{"original", original}, {"version_a", candidate_a}, {"version_b", candidate_b}},
         {{"case_id", opt.case_id}, {"variant", opt.variant}},
         opt.temperature},
        opt.max_attempts, [](const std::string& r) -> std::optional<std::string> {
            if (!parse_judge_reply(r))
                return std::string("answer must have CHOICE, RISK_A and RISK_B lines with scores 1-5");
            return std::nullopt;
        });
    if (!reply.accepted) throw GatewayError("judge_risk", "unparseable judgment: " + text::join(reply.rejections, " | "));
    return *parse_judge_reply(*reply.accepted);
}

void summarize(EvalReport& report) {
    report.plane.clear();
    report.tests.clear();
    std::set<std::string> names;
    for (const auto& c : report.cases)
        for (const auto& [v, _] : c.variants) names.insert(v);
    const auto variants = sorted_variants(names);

    for (const auto& v : variants) {
        PlanePoint pt{v, std::nullopt, std::nullopt, 0};
        double cos_sum = 0.0;
        double f1_sum = 0.0;
        std::size_t n_cos = 0;
        std::size_t n_f1 = 0;
        for (const auto& c : report.cases) {
            auto it = c.variants.find(v);
            if (it == c.variants.end()) continue;
            if (it->second.cosine) cos_sum += *it->second.cosine, ++n_cos;
            if (it->second.soft_f1) f1_sum += *it->second.soft_f1, ++n_f1;
        }
        if (n_cos == 0 && n_f1 == 0) continue;
        if (n_cos) pt.mean_cosine = cos_sum / static_cast<double>(n_cos);
        if (n_f1) pt.mean_soft_f1 = f1_sum / static_cast<double>(n_f1);
        pt.n = std::max(n_cos, n_f1);
        report.plane.push_back(pt);
    }

    // Cosine to the original: anonpsy against each other variant.
    std::vector<std::size_t> family;
    for (const auto& v : variants) {
        if (v == "anonpsy" || v == "original") continue;
        std::vector<double> diffs;
        for (const auto& c : report.cases) {
            auto a = c.variants.find("anonpsy");
            auto b = c.variants.find(v);
            if (a == c.variants.end() || b == c.variants.end() || !a->second.cosine || !b->second.cosine) continue;
            diffs.push_back(*a->second.cosine - *b->second.cosine);
        }
        if (diffs.empty()) continue;
        const auto w = stats::wilcoxon_signed_rank(diffs, stats::Alternative::two_sided);
        report.tests.push_back({"wilcoxon cosine anonpsy vs " + v, "W", w.statistic, w.p, std::nullopt, "holm", w.n,
                                w.degenerate ? "all differences zero" : (w.exact ? "exact" : "normal approximation")});
        family.push_back(report.tests.size() - 1);
    }
    if (!family.empty()) {
        std::vector<double> ps;
        for (auto i : family) ps.push_back(report.tests[i].p);
        const auto adj = stats::holm_correct(ps);
        for (std::size_t i = 0; i < family.size(); ++i) report.tests[family[i]].p_adjusted = adj[i];
    }

    // Soft-F1 across variants scored on every case.
    std::vector<std::string> scored;
    for (const auto& v : variants) {
        const bool everywhere = !report.cases.empty() && std::all_of(report.cases.begin(), report.cases.end(), [&](const CaseMetrics& c) {
            auto it = c.variants.find(v);
            return it != c.variants.end() && it->second.soft_f1;
        });
        if (everywhere) scored.push_back(v);
    }
    if (scored.size() >= 2 && report.cases.size() >= 2) {
        std::vector<std::vector<double>> table;
        for (const auto& c : report.cases) {
            std::vector<double> row;
            for (const auto& v : scored) row.push_back(*c.variants.at(v).soft_f1);
            table.push_back(std::move(row));
        }
        const auto fr = stats::friedman(table);
        report.tests.push_back({"friedman soft_f1 " + text::join(scored, "/"), "chi2", fr.statistic, fr.p, std::nullopt,
                                "none", table.size(), "df " + fmt::format("{}", fr.df)});
    }

    // Insider judgments.
    std::vector<double> risk_diffs;
    std::int64_t chosen = 0;
    std::int64_t judged = 0;
    for (const auto& c : report.cases) {
        if (!c.judge) continue;
        ++judged;
        if (c.judge->anonpsy_chosen()) ++chosen;
        risk_diffs.push_back(static_cast<double>(c.judge->risk_anonpsy() - c.judge->risk_candidate()));
    }
    if (judged > 0) {
        const auto w = stats::wilcoxon_signed_rank(risk_diffs, stats::Alternative::less);
        report.tests.push_back({"wilcoxon risk anonpsy < candidate", "W+", w.statistic, w.p, std::nullopt, "none", w.n,
                                w.degenerate ? "all differences zero" : (w.exact ? "exact" : "normal approximation")});
        const double p = stats::binomial_test(chosen, judged, 0.5);
        report.tests.push_back({"binomial anonpsy chosen as closer", "k", static_cast<double>(chosen), p, std::nullopt,
                                "none", static_cast<std::size_t>(judged), "p0 0.5"});
    }
}

yaml::Tree EvalReport::to_tree() const {
    using yaml::Tree;
    Tree t = Tree::object();
    t["plane"] = Tree::array();
    for (const auto& p : plane) {
        Tree e = Tree::object();
        e["variant"] = p.variant;
        e["cosine"] = p.mean_cosine ? Tree(*p.mean_cosine) : Tree();
        e["soft_f1"] = p.mean_soft_f1 ? Tree(*p.mean_soft_f1) : Tree();
        e["cases"] = static_cast<std::int64_t>(p.n);
        t["plane"].push_back(std::move(e));
    }
    t["tests"] = Tree::array();
    for (const auto& r : tests) {
        Tree e = Tree::object();
        e["name"] = r.name;
        e["statistic_name"] = r.statistic_name;
        e["statistic"] = r.statistic;
        e["p"] = r.p;
        e["p_adjusted"] = r.p_adjusted ? Tree(*r.p_adjusted) : Tree(nullptr);
        e["correction"] = r.correction;
        e["pairs"] = static_cast<std::int64_t>(r.n);
        e["note"] = r.note;
        t["tests"].push_back(std::move(e));
    }
    t["cases"] = Tree::array();
    for (const auto& c : cases) {
        Tree e = Tree::object();
        e["case_id"] = c.case_id;
        Tree vs = Tree::object();
        for (const auto& v : sorted_variants([&] {
                 std::set<std::string> s;
                 for (const auto& [k, _] : c.variants) s.insert(k);
                 return s;
             }())) {
            const auto& m = c.variants.at(v);
            Tree x = Tree::object();
            x["cosine"] = m.cosine ? Tree(*m.cosine) : Tree(nullptr);
            x["soft_f1"] = m.soft_f1 ? Tree(*m.soft_f1) : Tree(nullptr);
            x["predicted"] = Tree::array();
            for (const auto& p : m.predicted) x["predicted"].push_back(p);
            vs[v] = std::move(x);
        }
        e["variants"] = std::move(vs);
        if (c.judge) {
            Tree j = Tree::object();
            j["candidate"] = c.judge->candidate;
            j["anonpsy_is"] = c.judge->anonpsy_is_a ? "A" : "B";
            j["choice"] = std::string(1, c.judge->verdict.choice);
            j["risk_a"] = c.judge->verdict.risk_a;
            j["risk_b"] = c.judge->verdict.risk_b;
            e["judge"] = std::move(j);
        } else {
            e["judge"] = nullptr;
        }
        e["flags"] = Tree::array();
        for (const auto& f : c.flags) e["flags"].push_back(f);
        t["cases"].push_back(std::move(e));
    }
    return t;
}

std::string EvalReport::to_yaml() const { return yaml::emit(to_tree(), {"predicted"}); }

std::string EvalReport::to_csv() const {
    std::string out = "case_id,variant,cosine,soft_f1,risk\n";
    for (const auto& c : cases) {
        std::set<std::string> names;
        for (const auto& [k, _] : c.variants) names.insert(k);
        for (const auto& v : sorted_variants(names)) {
            const auto& m = c.variants.at(v);
            std::string risk;
            if (c.judge && v == "anonpsy") risk = std::to_string(c.judge->risk_anonpsy());
            if (c.judge && v == c.judge->candidate) risk = std::to_string(c.judge->risk_candidate());
            out += c.case_id + "," + v + "," + csv_number(m.cosine) + "," + csv_number(m.soft_f1) + "," + risk + "\n";
        }
    }
    return out;
}

}  // namespace anonpsy
