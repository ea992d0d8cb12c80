#include "generators.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "anonpsy/relations.hpp"
#include "anonpsy/temporal.hpp"

namespace anonpsy::testing {

namespace fs = std::filesystem;

fs::path fixture_dir() { return ANONPSY_FIXTURE_DIR; }
fs::path data_dir() { return ANONPSY_DATA_DIR; }

int uniform_int(TestRng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

bool coin(TestRng& rng, double p) { return std::bernoulli_distribution(p)(rng); }

namespace {

template <class T, std::size_t N>
const T& pick(TestRng& rng, const T (&items)[N]) {
    return items[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(N) - 1))];
}

const char* const kWords[] = {"sleep", "voices", "worry", "school", "mother", "panic", "work", "night",
                              "appetite", "fear", "alone", "crowd", "bus", "letters", "phone", "kitchen"};
const char* const kTricky[] = {"yes", "no", "null", "~", "- dash", "key: value", "#hash", "42", "3.5e2",
                               "'quoted'", "\"double\"", "tab\there", "line\nbreak", " padded ", "[list]",
                               "{map}", "a, b", "café", "50%", "@at", "*star", "&amp", "!bang", "|pipe",
                               ">fold", "colon:", "", "true", "0x1F", ".inf"};

const char* const kDiagnoses[] = {"Major depressive disorder",
                                  "Generalized anxiety disorder",
                                  "Schizophrenia",
                                  "Alcohol-induced depressive disorder",
                                  "Psychotic disorder due to another medical condition",
                                  "Antisocial personality disorder",
                                  "Attention-deficit/hyperactivity disorder",
                                  "Panic disorder",
                                  "Bipolar I disorder, current or most recent episode manic"};

}  // namespace

std::string random_phrase(TestRng& rng, bool tricky) {
    if (tricky && coin(rng, 0.3)) return pick(rng, kTricky);
    std::string out;
    const int n = uniform_int(rng, 1, 4);
    for (int i = 0; i < n; ++i) {
        if (i) out += ' ';
        out += pick(rng, kWords);
    }
    return out;
}

SemanticGraph random_interval_graph(TestRng& rng) {
    SemanticGraph g;
    g.attributes.demographics = {30, "female", "", "", ""};
    g.diagnoses.push_back({"d_001", "Major depressive disorder", {}});
    const int nodes = uniform_int(rng, 1, 8);
    int episodes = uniform_int(rng, nodes, 12);
    std::vector<std::string> used;
    for (int i = 0; i < nodes; ++i) {
        const int kind = uniform_int(rng, 0, 2);
        const int eps = i == nodes - 1 ? episodes : std::max(1, std::min(episodes - (nodes - 1 - i), uniform_int(rng, 1, 3)));
        episodes -= eps;
        std::vector<std::string> ids;
        for (int e = 0; e < eps; ++e) {
            DurationInterval d;
            d.id = fresh_id("du_", used);
            used.push_back(d.id);
            d.offset_days = uniform_int(rng, -400, 30);
            d.span_days = uniform_int(rng, 1, 90);
            // reuse an existing interval now and then to exercise deduplication
            if (!g.durations.empty() && coin(rng, 0.15)) {
                const auto& other = g.durations[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(g.durations.size()) - 1))];
                d.offset_days = other.offset_days;
                d.span_days = other.span_days;
            }
            ids.push_back(d.id);
            g.durations.push_back(d);
        }
        char id[16];
        if (kind == 0) {
            std::snprintf(id, sizeof id, "s_%03d", i + 1);
            g.symptoms.push_back({id, "symptom " + std::to_string(i), "", false, "", {}, ids});
        } else if (kind == 1) {
            std::snprintf(id, sizeof id, "t_%03d", i + 1);
            TreatmentNode t;
            t.id = id;
            t.treatment_type = "pharmacotherapy";
            t.name = "drug " + std::to_string(i);
            t.duration_ids = ids;
            g.treatments.push_back(t);
        } else {
            std::snprintf(id, sizeof id, "ph_%03d", i + 1);
            g.past_history.push_back({id, "condition " + std::to_string(i), ids});
        }
    }
    g.visit_event.setting = "outpatient clinic";
    g.visit_event.visit_episode = "came in";
    return g;
}

SemanticGraph random_canonical_graph(TestRng& rng, bool tricky_text) {
    for (;;) {
        SemanticGraph g;
        auto& d = g.attributes.demographics;
        d.age = uniform_int(rng, 18, 90);
        d.sex = coin(rng) ? "female" : "male";
        d.ethnicity = coin(rng) ? random_phrase(rng, tricky_text) : "";
        d.occupation = random_phrase(rng, tricky_text);
        d.family_structure = random_phrase(rng, tricky_text);
        for (int i = uniform_int(rng, 0, 2); i > 0; --i)
            g.attributes.family_history.push_back(
                {random_phrase(rng, false), random_phrase(rng, tricky_text), random_phrase(rng, tricky_text)});
        auto& t = g.attributes.test_results;
        t.labs = coin(rng) ? "MMSE " + std::to_string(uniform_int(rng, 0, 30)) : "";
        t.imaging = coin(rng) ? random_phrase(rng, tricky_text) : "";
        t.mental_status = coin(rng, 0.7) ? "Mood was " + random_phrase(rng, false) + ". Speech was normal." : "";
        t.other = coin(rng, 0.2) ? random_phrase(rng, tricky_text) : "";

        const int n_dx = uniform_int(rng, 1, 3);
        for (int i = 0; i < n_dx; ++i) {
            char id[16];
            std::snprintf(id, sizeof id, "d_%03d", i + 1);
            g.diagnoses.push_back({id, pick(rng, kDiagnoses), {}});
        }

        std::vector<std::string> used;
        auto interval = [&](Day start, Day span) {
            DurationInterval du;
            du.id = fresh_id("du_", used);
            used.push_back(du.id);
            du.offset_days = start;
            du.span_days = span;
            du.age_anchored = coin(rng, 0.1);
            g.durations.push_back(du);
            return du.id;
        };
        auto random_interval = [&] {
            const Day start = uniform_int(rng, -800, 0);
            const Day span = coin(rng, 0.4) ? 1 - start : uniform_int(rng, 1, 60);
            return interval(start, span);
        };

        const int n_s = uniform_int(rng, 0, 6);
        for (int i = 0; i < n_s; ++i) {
            SymptomNode s;
            char id[16];
            std::snprintf(id, sizeof id, "s_%03d", i + 1);
            s.id = id;
            s.symptom = random_phrase(rng, tricky_text);
            s.pattern = coin(rng) ? random_phrase(rng, tricky_text) : "";
            s.evidence_text = random_phrase(rng, tricky_text);
            for (int c = uniform_int(rng, 0, 2); c > 0; --c) {
                StebContext ctx;
                for (auto f : kStebFields)
                    if (coin(rng)) field(ctx, f) = random_phrase(rng, tricky_text);
                if (ctx.empty()) ctx.behavior = random_phrase(rng, false);
                s.contexts.push_back(ctx);
            }
            s.duration_ids.push_back(random_interval());
            g.symptoms.push_back(s);
        }
        const int n_t = uniform_int(rng, 0, 3);
        for (int i = 0; i < n_t; ++i) {
            TreatmentNode tr;
            char id[16];
            std::snprintf(id, sizeof id, "t_%03d", i + 1);
            tr.id = id;
            tr.treatment_type = coin(rng) ? "pharmacotherapy" : "psychotherapy";
            tr.name = random_phrase(rng, tricky_text);
            if (coin(rng)) tr.dose = std::to_string(uniform_int(rng, 1, 400)) + " mg";
            if (coin(rng)) tr.route = std::string(kRouteVocabulary[static_cast<std::size_t>(uniform_int(rng, 0, 6))]);
            if (coin(rng)) tr.frequency = "daily";
            if (coin(rng)) tr.outcome = random_phrase(rng, tricky_text);
            tr.duration_ids.push_back(random_interval());
            if (coin(rng, 0.3)) tr.duration_ids.push_back(random_interval());
            g.treatments.push_back(tr);
        }
        const int n_p = uniform_int(rng, 0, 2);
        for (int i = 0; i < n_p; ++i) {
            char id[16];
            std::snprintf(id, sizeof id, "ph_%03d", i + 1);
            PastHistoryNode p{id, random_phrase(rng, tricky_text), {}};
            if (coin(rng, 0.8)) p.duration_ids.push_back(interval(uniform_int(rng, -5000, -400), uniform_int(rng, 1, 300)));
            g.past_history.push_back(p);
        }

        auto& v = g.visit_event;
        v.setting = coin(rng) ? "inpatient unit" : "outpatient clinic";
        v.arrival_mode = coin(rng) ? "family" : "self";
        v.legal_status = coin(rng) ? "voluntary" : "involuntary";
        v.reason_for_visit = random_phrase(rng, tricky_text);
        if (coin(rng, 0.3)) v.safety_flags.push_back("suicidal ideation");
        v.source_of_information = "patient";
        if (coin(rng)) v.pathway = random_phrase(rng, tricky_text);
        v.visit_episode = random_phrase(rng, tricky_text);

        auto dx_id = [&] { return g.diagnoses[static_cast<std::size_t>(uniform_int(rng, 0, n_dx - 1))].id; };
        for (const auto& s : g.symptoms)
            if (coin(rng, 0.85)) g.relations.push_back({RelationType::manifests_as, s.id, dx_id()});
        for (const auto& tr : g.treatments) {
            if (!g.past_history.empty() && coin(rng, 0.3))
                g.relations.push_back({RelationType::treatment_of, tr.id, g.past_history[0].id});
            else if (coin(rng, 0.9))
                g.relations.push_back({RelationType::treatment_of, tr.id, dx_id()});
        }
        for (int i = uniform_int(rng, 0, 2); i > 0; --i) {
            std::vector<std::string> sources;
            for (const auto& s : g.symptoms) sources.push_back(s.id);
            for (const auto& tr : g.treatments) sources.push_back(tr.id);
            for (const auto& p : g.past_history) sources.push_back(p.id);
            if (sources.empty()) break;
            g.relations.push_back({RelationType::induces,
                                   sources[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(sources.size()) - 1))],
                                   dx_id()});
        }
        std::sort(g.relations.begin(), g.relations.end());
        g.relations.erase(std::unique(g.relations.begin(), g.relations.end()), g.relations.end());

        g = canonicalize_timeline(std::move(g));
        g = build_presents_with(std::move(g));
        g.sort_canonical();
        if (validate_graph(g).empty() && validate_canonical(g).empty()) return g;
    }
}

std::set<Day> covered_days(const std::vector<std::pair<Day, Day>>& intervals) {
    std::set<Day> out;
    for (const auto& [b, e] : intervals)
        for (Day d = b; d < e; ++d) out.insert(d);
    return out;
}

std::vector<std::pair<Day, Day>> day_runs(const std::set<Day>& days) {
    std::vector<std::pair<Day, Day>> out;
    for (Day d : days) {
        if (!out.empty() && out.back().second == d)
            out.back().second = d + 1;
        else
            out.emplace_back(d, d + 1);
    }
    return out;
}

std::vector<std::pair<Day, Day>> node_intervals(const SemanticGraph& g, const std::string& node_id) {
    std::vector<std::pair<Day, Day>> out;
    if (const auto* refs = duration_refs(g, node_id))
        for (const auto& id : *refs)
            if (const auto* d = g.find_duration(id)) out.emplace_back(d->start(), d->end());
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::string> timed_node_ids(const SemanticGraph& g) {
    std::vector<std::string> out;
    for (const auto& n : g.symptoms) out.push_back(n.id);
    for (const auto& n : g.treatments) out.push_back(n.id);
    for (const auto& n : g.past_history) out.push_back(n.id);
    return out;
}

std::map<std::string, int> outline_occurrences(const NarrativeOutline& o) {
    std::map<std::string, int> out;
    auto add = [&](const std::vector<std::string>& ids) {
        for (const auto& id : ids) ++out[id];
    };
    for (const auto& p : o.prepass) {
        ++out[p.past_history_id];
        add(p.treatment_ids);
    }
    for (const auto& b : o.blocks) {
        add(b.symptom_ids);
        add(b.treatment_ids);
    }
    for (const auto& c : o.induced_clusters) {
        add(c.symptom_ids);
        add(c.treatment_ids);
    }
    add(o.tail.past_history_ids);
    return out;
}

std::shared_ptr<MockBackend> fixture_backend() { return std::make_shared<MockBackend>(fixture_dir() / "mock"); }

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("anonpsy_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace anonpsy::testing
