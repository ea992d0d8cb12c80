#include "anonpsy/narrator.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <regex>
#include <set>
#include <functional>

#include "anonpsy/similarity.hpp"
#include "anonpsy/text.hpp"

namespace anonpsy {

namespace {

constexpr std::string_view kAdmissionSettings[] = {"inpatient", "emergency", "hospital"};

std::string quantity(std::int64_t n, std::string_view unit) {
    std::string out = text::spell_number(n) + " " + std::string(unit);
    if (n != 1) out += "s";
    return out;
}

// ---------------------------------------------------------------------------
// planning

struct Placement {
    enum Kind { block, prepass, cluster } kind = block;
    std::string key;  // block key, past-history id or cluster id
};

std::string block_key(const Anchor& a, const std::string& dx) { return a.duration_id + "\x1f" + dx; }

class Planner {
public:
    explicit Planner(const SemanticGraph& g) : g_(g) { g_.sort_canonical(); }

    NarrativeOutline run() {
        NarrativeOutline out;
        out.lexicon = choose_lexicon(g_);
        out.lead = lead();
        collect_relations();
        place_items();
        build_clusters();
        assemble(out);
        return out;
    }

private:
    Anchor anchor_of(const std::vector<std::string>& duration_ids) const {
        Anchor best;
        for (const auto& id : duration_ids) {
            const auto* d = g_.find_duration(id);
            if (!d) continue;
            if (!best.start || d->start() < *best.start || (d->start() == *best.start && id < best.duration_id))
                best = {id, d->start()};
        }
        return best;
    }

    Anchor anchor_of_item(const std::string& id) const {
        const auto* refs = duration_refs(g_, id);
        return refs ? anchor_of(*refs) : Anchor{};
    }

    LeadSummary lead() const {
        const auto& d = g_.attributes.demographics;
        const auto& v = g_.visit_event;
        return {d.age, d.sex, v.setting, v.arrival_mode, v.reason_for_visit, v.pathway, v.source_of_information,
                v.visit_episode};
    }

    void collect_relations() {
        for (const auto& r : g_.relations) {
            switch (r.type) {
                case RelationType::manifests_as: dx_of_[r.source].push_back(r.target); break;
                case RelationType::treatment_of: targets_of_[r.source].push_back(r.target); break;
                case RelationType::induces:
                    if (!inducer_.count(r.target) || r.source < inducer_[r.target]) inducer_[r.target] = r.source;
                    if (g_.type_of(r.source) == NodeType::past_history) prepass_.insert(r.source);
                    break;
                case RelationType::presents_with: break;
            }
        }
        for (auto& [_, v] : dx_of_) std::sort(v.begin(), v.end());
        for (auto& [_, v] : targets_of_) {
            std::sort(v.begin(), v.end());
            for (const auto& t : v)
                if (g_.type_of(t) == NodeType::past_history) prepass_.insert(t);
        }
    }

    std::string first_dx(const std::string& symptom) const {
        auto it = dx_of_.find(symptom);
        return it == dx_of_.end() || it->second.empty() ? std::string() : it->second.front();
    }

    void place_items() {
        for (const auto& s : g_.symptoms) {
            const Anchor a = anchor_of(s.duration_ids);
            anchors_[s.id] = a;
            group_dx_[s.id] = first_dx(s.id);
            regular_[s.id] = {Placement::block, block_key(a, group_dx_[s.id])};
        }
        for (const auto& t : g_.treatments) {
            const Anchor a = anchor_of(t.duration_ids);
            anchors_[t.id] = a;
            std::string dx, ph, symptom;
            if (auto it = targets_of_.find(t.id); it != targets_of_.end())
                for (const auto& target : it->second) {
                    const auto type = g_.type_of(target);
                    if (type == NodeType::diagnosis && dx.empty()) dx = target;
                    if (type == NodeType::past_history && ph.empty()) ph = target;
                    if (type == NodeType::symptom && symptom.empty()) symptom = target;
                }
            if (dx.empty() && !ph.empty()) {
                regular_[t.id] = {Placement::prepass, ph};
                continue;
            }
            if (dx.empty() && !symptom.empty()) dx = group_dx_[symptom];
            group_dx_[t.id] = dx;
            regular_[t.id] = {Placement::block, block_key(a, dx)};
        }
        placement_ = regular_;
    }

    void build_clusters() {
        int n = 0;
        for (const auto& dx : g_.diagnoses) {
            auto it = inducer_.find(dx.id);
            if (it == inducer_.end()) continue;
            InducedCluster c;
            c.id = fmt_cluster_id(++n);
            c.source_id = it->second;
            c.diagnosis_id = dx.id;
            for (const auto& s : g_.symptoms)
                if (s.id != c.source_id && group_dx_[s.id] == dx.id && regular_[s.id].kind == Placement::block)
                    c.symptom_ids.push_back(s.id);
            for (const auto& t : g_.treatments)
                if (t.id != c.source_id && group_dx_.count(t.id) && group_dx_[t.id] == dx.id &&
                    regular_[t.id].kind == Placement::block)
                    c.treatment_ids.push_back(t.id);
            clusters_.push_back(std::move(c));
        }
        for (const auto& c : clusters_) alive_.insert(c.id);

        for (bool changed = true; changed;) {
            changed = false;
            refresh_placements();
            for (const auto& c : clusters_) {
                if (!alive_.count(c.id)) continue;
                if (auto cycle = cycle_through(c.id)) {
                    alive_.erase(*std::min_element(cycle->begin(), cycle->end()));
                    changed = true;
                    break;
                }
            }
        }
        refresh_placements();
    }

    static std::string fmt_cluster_id(int n) {
        std::string digits = std::to_string(n);
        if (digits.size() < 3) digits.insert(0, 3 - digits.size(), '0');
        return "ic_" + digits;
    }

    void refresh_placements() {
        placement_ = regular_;
        for (const auto& c : clusters_) {
            if (!alive_.count(c.id)) continue;
            for (const auto& id : c.symptom_ids) placement_[id] = {Placement::cluster, c.id};
            for (const auto& id : c.treatment_ids) placement_[id] = {Placement::cluster, c.id};
        }
    }

    Placement host_of(const InducedCluster& c) const {
        if (prepass_.count(c.source_id) && g_.type_of(c.source_id) == NodeType::past_history)
            return {Placement::prepass, c.source_id};
        return placement_.at(c.source_id);
    }

    const InducedCluster& cluster(const std::string& id) const {
        return *std::find_if(clusters_.begin(), clusters_.end(), [&](const InducedCluster& c) { return c.id == id; });
    }

    std::optional<std::vector<std::string>> cycle_through(const std::string& start) const {
        std::vector<std::string> chain{start};
        std::string cur = start;
        for (;;) {
            const Placement h = host_of(cluster(cur));
            if (h.kind != Placement::cluster) return std::nullopt;
            if (h.key == start) return chain;
            if (std::find(chain.begin(), chain.end(), h.key) != chain.end()) return std::nullopt;
            chain.push_back(h.key);
            cur = h.key;
        }
    }

    void assemble(NarrativeOutline& out) {
        std::map<std::string, std::size_t> block_index;
        auto block_for = [&](const std::string& key, const std::string& item) -> OutlineBlock& {
            auto it = block_index.find(key);
            if (it == block_index.end()) {
                OutlineBlock b;
                b.anchor = anchors_.at(item);
                b.diagnosis_id = key.substr(key.find('\x1f') + 1);
                it = block_index.emplace(key, out.blocks.size()).first;
                out.blocks.push_back(std::move(b));
            }
            return out.blocks[it->second];
        };
        std::map<std::string, PrepassEntry> prepass;
        for (const auto& ph : g_.past_history)
            if (prepass_.count(ph.id)) prepass[ph.id] = {ph.id, anchor_of(ph.duration_ids), {}, {}};

        for (const auto& s : g_.symptoms)
            if (placement_[s.id].kind == Placement::block) block_for(placement_[s.id].key, s.id).symptom_ids.push_back(s.id);
        for (const auto& t : g_.treatments) {
            const Placement& p = placement_[t.id];
            if (p.kind == Placement::block) block_for(p.key, t.id).treatment_ids.push_back(t.id);
            if (p.kind == Placement::prepass) prepass[p.key].treatment_ids.push_back(t.id);
        }

        std::vector<InducedCluster> live;
        for (const auto& c : clusters_)
            if (alive_.count(c.id)) live.push_back(c);
        for (auto& c : live) {
            const Placement h = host_of(c);
            if (h.kind == Placement::block) block_for(h.key, c.source_id).induced_cluster_ids.push_back(c.id);
            if (h.kind == Placement::prepass) prepass[h.key].induced_cluster_ids.push_back(c.id);
        }
        for (auto& c : live) {
            const Placement h = host_of(c);
            if (h.kind != Placement::cluster) continue;
            for (auto& host : live)
                if (host.id == h.key) host.induced_cluster_ids.push_back(c.id);
        }
        out.induced_clusters = std::move(live);

        auto anchor_less = [](const Anchor& a, const Anchor& b) {
            if (a.start.has_value() != b.start.has_value()) return a.start.has_value();
            if (a.start != b.start) return *a.start < *b.start;
            return a.duration_id < b.duration_id;
        };
        std::stable_sort(out.blocks.begin(), out.blocks.end(), [&](const OutlineBlock& a, const OutlineBlock& b) {
            if (a.anchor != b.anchor) return anchor_less(a.anchor, b.anchor);
            if (a.diagnosis_id.empty() != b.diagnosis_id.empty()) return b.diagnosis_id.empty();
            return a.diagnosis_id < b.diagnosis_id;
        });
        for (auto& [_, e] : prepass) out.prepass.push_back(std::move(e));
        std::stable_sort(out.prepass.begin(), out.prepass.end(), [&](const PrepassEntry& a, const PrepassEntry& b) {
            if (a.anchor.start.has_value() != b.anchor.start.has_value()) return !a.anchor.start.has_value();
            if (a.anchor.start != b.anchor.start) return *a.anchor.start < *b.anchor.start;
            return a.past_history_id < b.past_history_id;
        });

        for (const auto& ph : g_.past_history)
            if (!prepass_.count(ph.id)) out.tail.past_history_ids.push_back(ph.id);
        out.tail.family_history = g_.attributes.family_history;
        const auto& tr = g_.attributes.test_results;
        for (const auto& [name, value] : {std::pair<std::string, std::string>{"labs", tr.labs},
                                          {"imaging", tr.imaging},
                                          {"mental_status", tr.mental_status},
                                          {"other", tr.other}})
            if (!text::trim(value).empty()) out.tail.tests.emplace_back(name, text::trim(value));

        fill_ledger(out);
    }

    void fill_ledger(NarrativeOutline& out) {
        auto add = [&](const std::string& id) { out.ledger.emplace_back(id, anchor_of_item(id).duration_id); };
        std::function<void(const std::string&)> add_cluster = [&](const std::string& cid) {
            const auto* c = out.find_cluster(cid);
            for (const auto& id : c->symptom_ids) add(id);
            for (const auto& id : c->treatment_ids) add(id);
            for (const auto& nested : c->induced_cluster_ids) add_cluster(nested);
        };
        for (const auto& unit : timeline_units(out)) {
            if (unit.first) {
                const auto& e = out.prepass[unit.second];
                add(e.past_history_id);
                for (const auto& id : e.treatment_ids) add(id);
                for (const auto& cid : e.induced_cluster_ids) add_cluster(cid);
            } else {
                const auto& b = out.blocks[unit.second];
                for (const auto& id : b.symptom_ids) add(id);
                for (const auto& id : b.treatment_ids) add(id);
                for (const auto& cid : b.induced_cluster_ids) add_cluster(cid);
            }
        }
    }

public:
    /// (is_prepass, index) in narration order.
    static std::vector<std::pair<bool, std::size_t>> timeline_units(const NarrativeOutline& out) {
        std::vector<std::pair<bool, std::size_t>> units;
        std::size_t p = 0;
        std::size_t b = 0;
        while (p < out.prepass.size() && !out.prepass[p].anchor.start) units.emplace_back(true, p++);
        while (p < out.prepass.size() || b < out.blocks.size()) {
            const bool take_prepass =
                p < out.prepass.size() &&
                (b >= out.blocks.size() || !out.blocks[b].anchor.start ||
                 *out.prepass[p].anchor.start <= *out.blocks[b].anchor.start);
            if (take_prepass) {
                units.emplace_back(true, p++);
            } else {
                units.emplace_back(false, b++);
            }
        }
        return units;
    }

private:
    SemanticGraph g_;
    std::map<std::string, std::vector<std::string>> dx_of_;
    std::map<std::string, std::vector<std::string>> targets_of_;
    std::map<std::string, std::string> inducer_;
    std::set<std::string> prepass_;
    std::map<std::string, Anchor> anchors_;
    std::map<std::string, std::string> group_dx_;
    std::map<std::string, Placement> regular_;
    std::map<std::string, Placement> placement_;
    std::vector<InducedCluster> clusters_;
    std::set<std::string> alive_;
};

// ---------------------------------------------------------------------------
// realization

const std::set<std::string, std::less<>>& name_whitelist() {
    static const std::set<std::string, std::less<>> kWords = {
        "A", "ADHD", "After", "Alcohol", "An", "Antisocial", "Anxiety", "As", "Assessment", "At", "Attention",
        "Autism", "Before", "Bipolar", "Borderline", "CT", "Care", "Center", "Child", "Clinic", "Clinical",
        "Cognitive", "Compulsive", "Crisis", "DSM", "Day", "Deficit", "Department", "Depressive", "Disorder",
        "During", "ED", "EEG", "ER", "Emergency", "Examination", "Full", "General", "Generalized", "He",
        "Health", "Her", "His", "Hospital", "Hyperactivity", "I", "ICU", "II", "IQ", "In", "Inpatient",
        "Intensive", "MMSE", "MRI", "MSE", "Major", "Mental", "Mini", "MoCA", "Obsessive", "On", "Outpatient",
        "Over", "Panic", "Personality", "Post", "Posttraumatic", "Practitioner", "Primary", "Psychiatric",
        "Psychosis", "Scale", "Schizophrenia", "Services", "She", "Since", "Social", "Spectrum", "Status",
        "Stress", "Substance", "Team", "That", "The", "Their", "There", "They", "This", "Traumatic", "Type",
        "Unit", "Upon", "Use", "When", "While", "With"};
    return kWords;
}

bool capitalized(std::string_view w) { return !w.empty() && std::isupper(static_cast<unsigned char>(w[0])); }

std::string strip_punct(std::string_view w) {
    std::size_t b = 0;
    std::size_t e = w.size();
    while (b < e && !std::isalnum(static_cast<unsigned char>(w[b]))) ++b;
    while (e > b && !std::isalnum(static_cast<unsigned char>(w[e - 1]))) --e;
    return std::string(w.substr(b, e - b));
}

std::vector<std::string> split_words(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::string ensure_period(std::string s) {
    s = text::trim(s);
    if (!s.empty() && s.back() != '.' && s.back() != '!' && s.back() != '?' && s.back() != '"') s += '.';
    return s;
}

std::string list_phrase(const std::vector<std::string>& items) {
    if (items.empty()) return {};
    if (items.size() == 1) return items[0];
    std::vector<std::string> head(items.begin(), items.end() - 1);
    return text::join(head, ", ") + " and " + items.back();
}

std::string anchor_phrase(const Anchor& a, Lexicon lex) {
    return a.start ? time_phrase(*a.start, lex) : std::string("at an unspecified time");
}

std::string node_name(const SemanticGraph& g, const std::string& id) {
    if (const auto* s = g.find_symptom(id)) return s->symptom;
    if (const auto* t = g.find_treatment(id)) return t->name;
    if (const auto* p = g.find_past_history(id)) return p->condition;
    if (const auto* d = g.find_diagnosis(id)) return d->label;
    return id;
}

std::string steb_lines(const SymptomNode& s) {
    std::vector<std::string> lines;
    if (!text::trim(s.pattern).empty()) lines.push_back("Pattern: " + s.pattern);
    for (const auto& ctx : s.contexts)
        for (StebField f : kStebFields)
            if (const auto& v = field(ctx, f)) lines.push_back(text::capitalize_first(to_string(f)) + ": " + *v);
    if (lines.empty()) lines.emplace_back("(no further detail recorded)");
    return text::join(lines, "\n");
}

std::string fallback_symptom_sentence(const SymptomNode& s, const std::string& phrase) {
    std::vector<std::string> parts;
    if (!s.contexts.empty())
        for (StebField f : kStebFields)
            if (const auto& v = field(s.contexts.front(), f)) parts.push_back(std::string(to_string(f)) + ": " + *v);
    std::string out = text::capitalize_first(phrase) + ", the patient experienced " + s.symptom;
    if (!parts.empty()) out += " (" + text::join(parts, "; ") + ")";
    return ensure_period(out);
}

/// Label as it reads mid-sentence: "Major depressive disorder" -> "major depressive disorder", "PTSD" kept.
std::string inline_label(std::string label) {
    if (label.size() > 1 && std::isupper(static_cast<unsigned char>(label[0])) &&
        !std::isupper(static_cast<unsigned char>(label[1])))
        label[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(label[0])));
    return label;
}

std::string regimen_sentence(const SemanticGraph& g, const std::vector<std::string>& treatment_ids,
                             const std::string& target_label, const std::string& phrase) {
    std::vector<std::string> items;
    for (const auto& id : treatment_ids) {
        const auto* t = g.find_treatment(id);
        if (!t) continue;
        std::vector<std::string> bits{t->name};
        for (const auto* opt : {&t->dose, &t->route, &t->frequency})
            if (*opt && !text::trim(**opt).empty()) bits.push_back(**opt);
        std::string item = text::join(bits, " ");
        if (t->outcome && !text::trim(*t->outcome).empty()) item += " (" + *t->outcome + ")";
        items.push_back(std::move(item));
    }
    std::string out = text::capitalize_first(phrase) + ", treatment";
    if (!target_label.empty()) out += " for " + inline_label(target_label);
    out += items.size() > 1 ? " combined " : " consisted of ";
    return ensure_period(out + list_phrase(items));
}

class HistoryWriter {
public:
    HistoryWriter(const NarrativeOutline& o, const SemanticGraph& g, Gateway& gw, const NarratorOptions& opt)
        : o_(o), g_(g), gw_(gw), opt_(opt) {}

    HistoryText run() {
        std::vector<std::string> paragraphs;
        for (const auto& [is_prepass, index] : Planner::timeline_units(o_)) {
            std::vector<std::string> sentences;
            if (is_prepass) {
                prepass(o_.prepass[index], sentences);
            } else {
                block(o_.blocks[index], sentences);
            }
            if (!sentences.empty()) paragraphs.push_back(text::join(sentences, " "));
        }
        return {text::join(paragraphs, "\n\n"), std::move(flags_)};
    }

private:
    bool claim(const std::string& item, const Anchor& a) {
        if (ledger_.insert({item, a.duration_id}).second) return true;
        flags_.push_back(item + ": already narrated for " + (a.duration_id.empty() ? "(undated)" : a.duration_id));
        return false;
    }

    Anchor anchor_of(const std::string& id) const {
        Anchor best;
        if (const auto* refs = duration_refs(g_, id))
            for (const auto& did : *refs)
                if (const auto* d = g_.find_duration(did);
                    d && (!best.start || d->start() < *best.start || (d->start() == *best.start && did < best.duration_id)))
                    best = {did, d->start()};
        return best;
    }

    void prepass(const PrepassEntry& e, std::vector<std::string>& out) {
        const auto* ph = g_.find_past_history(e.past_history_id);
        if (!ph) return;
        if (claim(ph->id, e.anchor)) {
            const std::string opening = e.anchor.start ? time_phrase(*e.anchor.start, o_.lexicon) : "previously";
            out.push_back(ensure_period(text::capitalize_first(opening) + ", " + ph->condition + " was documented"));
        }
        regimen(e.treatment_ids, ph->condition, out);
        for (const auto& cid : e.induced_cluster_ids) cluster(cid, out);
    }

    void block(const OutlineBlock& b, std::vector<std::string>& out) {
        for (const auto& id : b.symptom_ids) symptom(id, out);
        const auto* dx = g_.find_diagnosis(b.diagnosis_id);
        regimen(b.treatment_ids, dx ? dx->label : std::string(), out);
        for (const auto& cid : b.induced_cluster_ids) cluster(cid, out);
    }

    void cluster(const std::string& cid, std::vector<std::string>& out) {
        const auto* c = o_.find_cluster(cid);
        if (!c) return;
        const std::string label = node_name(g_, c->diagnosis_id);
        out.push_back(ensure_period(text::capitalize_first(node_name(g_, c->source_id)) + " was followed by the onset of " +
                                    inline_label(label)));
        for (const auto& id : c->symptom_ids) symptom(id, out);
        regimen(c->treatment_ids, label, out);
        for (const auto& nested : c->induced_cluster_ids) cluster(nested, out);
    }

    void regimen(const std::vector<std::string>& ids, const std::string& label, std::vector<std::string>& out) {
        std::vector<std::string> fresh;
        std::optional<Anchor> first;
        for (const auto& id : ids) {
            const Anchor a = anchor_of(id);
            if (!claim(id, a)) continue;
            if (!first) first = a;
            fresh.push_back(id);
        }
        if (!fresh.empty()) out.push_back(regimen_sentence(g_, fresh, label, anchor_phrase(*first, o_.lexicon)));
    }

    void symptom(const std::string& id, std::vector<std::string>& out) {
        const auto* s = g_.find_symptom(id);
        if (!s) return;
        const Anchor a = anchor_of(id);
        if (!claim(id, a)) return;
        const std::string phrase = anchor_phrase(a, o_.lexicon);
        std::string reason;
        try {
            const auto reply = complete_validated(
                gw_,
                {"symptom_sentence",
                 {{"time_phrase", phrase}, {"symptom", s->symptom}, {"fields", steb_lines(*s)}},
                 {{"case_id", opt_.case_id}, {"node_id", id}, {"duration", a.duration_id}},
                 opt_.sentence_temperature},
                opt_.max_attempts, [](const std::string& reply) -> std::optional<std::string> {
                    const auto sentences = text::split_sentences(strip_meta_text(reply));
                    if (sentences.size() != 1)
                        return "expected exactly one sentence, got " + std::to_string(sentences.size());
                    return std::nullopt;
                });
            if (reply.accepted) {
                out.push_back(ensure_period(strip_meta_text(*reply.accepted)));
                return;
            }
            reason = reply.rejections.back();
        } catch (const GatewayError& e) {
            reason = e.what();
        }
        flags_.push_back(id + ": fallback sentence (" + reason + ")");
        out.push_back(fallback_symptom_sentence(*s, phrase));
    }

    const NarrativeOutline& o_;
    const SemanticGraph& g_;
    Gateway& gw_;
    const NarratorOptions& opt_;
    std::set<std::pair<std::string, std::string>> ledger_;
    std::vector<std::string> flags_;
};

std::string tail_lines(const std::vector<std::string>& items) {
    if (items.empty()) return "(none)";
    std::string out;
    for (const auto& i : items) out += "- " + i + "\n";
    out.pop_back();
    return out;
}

struct TailLists {
    std::vector<std::string> past_history;
    std::vector<std::string> family_history;
    std::vector<std::string> tests;

    bool empty() const { return past_history.empty() && family_history.empty() && tests.empty(); }
};

TailLists tail_lists(const NarrativeOutline& o, const SemanticGraph& g) {
    TailLists t;
    for (const auto& id : o.tail.past_history_ids) t.past_history.push_back(node_name(g, id));
    for (const auto& f : o.tail.family_history)
        t.family_history.push_back(text::trim(f.member + " with " + f.condition));
    for (const auto& [name, value] : o.tail.tests) t.tests.push_back(text::replace_all(name, "_", " ") + ": " + value);
    return t;
}

std::string fallback_tail(const TailLists& t) {
    std::vector<std::string> out;
    if (!t.past_history.empty()) out.push_back("Past history was notable for " + list_phrase(t.past_history) + ".");
    if (!t.family_history.empty())
        out.push_back("Family history included " + list_phrase(t.family_history) + ".");
    if (!t.tests.empty()) {
        std::vector<std::string> parts;
        for (const auto& s : t.tests) {
            std::string p = text::trim(s);
            while (!p.empty() && (p.back() == '.' || p.back() == ';')) p.pop_back();
            parts.push_back(p);
        }
        out.push_back("Day 0 findings: " + text::join(parts, "; ") + ".");
    }
    return text::join(out, " ");
}

}  // namespace

std::string_view to_string(Lexicon lexicon) { return lexicon == Lexicon::admission ? "admission" : "generic"; }

std::string time_phrase(Day offset_days, Lexicon lexicon) {
    const bool admission = lexicon == Lexicon::admission;
    if (offset_days == 0) return admission ? "on the day of admission" : "at the time of evaluation";
    const bool before = offset_days < 0;
    const Day d = before ? -offset_days : offset_days;
    if (d == 1 && admission) return before ? "the day before admission" : "the day after admission";

    std::string amount;
    if (d < 14) {
        amount = quantity(d, "day");
    } else if (d < 60) {
        amount = quantity(std::llround(static_cast<double>(d) / 7.0), "week");
    } else if (d < 365) {
        amount = quantity(std::llround(static_cast<double>(d) / 30.0), "month");
    } else {
        amount = quantity(std::llround(static_cast<double>(d) / 365.0), "year");
    }
    if (admission) return amount + (before ? " before admission" : " after admission");
    return amount + (before ? " earlier" : " later");
}

Lexicon choose_lexicon(const SemanticGraph& g) {
    for (auto word : kAdmissionSettings)
        if (text::contains_ci(g.visit_event.setting, word)) return Lexicon::admission;
    return Lexicon::generic;
}

const InducedCluster* NarrativeOutline::find_cluster(std::string_view id) const {
    for (const auto& c : induced_clusters)
        if (c.id == id) return &c;
    return nullptr;
}

yaml::Tree NarrativeOutline::to_tree() const {
    using yaml::Tree;
    auto ids = [](const std::vector<std::string>& v) {
        Tree a = Tree::array();
        for (const auto& s : v) a.push_back(s);
        return a;
    };
    auto or_null = [](const std::string& s) { return s.empty() ? Tree(nullptr) : Tree(s); };
    auto start = [](const Anchor& a) { return a.start ? Tree(*a.start) : Tree(nullptr); };

    Tree t = Tree::object();
    t["lexicon"] = std::string(to_string(lexicon));
    Tree l = Tree::object();
    l["age"] = lead.age;
    l["sex"] = lead.sex;
    l["setting"] = lead.setting;
    l["arrival_mode"] = lead.arrival_mode;
    l["reason"] = lead.reason;
    l["pathway"] = lead.pathway ? Tree(*lead.pathway) : Tree(nullptr);
    l["source"] = lead.source;
    l["visit_episode"] = lead.visit_episode;
    t["lead"] = std::move(l);

    t["prepass"] = Tree::array();
    for (const auto& e : prepass) {
        Tree p = Tree::object();
        p["past_history"] = e.past_history_id;
        p["duration"] = or_null(e.anchor.duration_id);
        p["start"] = start(e.anchor);
        p["treatments"] = ids(e.treatment_ids);
        p["induced_clusters"] = ids(e.induced_cluster_ids);
        t["prepass"].push_back(std::move(p));
    }
    t["blocks"] = Tree::array();
    for (const auto& b : blocks) {
        Tree p = Tree::object();
        p["duration"] = or_null(b.anchor.duration_id);
        p["start"] = start(b.anchor);
        p["diagnosis"] = or_null(b.diagnosis_id);
        p["symptoms"] = ids(b.symptom_ids);
        p["treatments"] = ids(b.treatment_ids);
        p["induced_clusters"] = ids(b.induced_cluster_ids);
        t["blocks"].push_back(std::move(p));
    }
    t["induced_clusters"] = Tree::array();
    for (const auto& c : induced_clusters) {
        Tree p = Tree::object();
        p["id"] = c.id;
        p["source"] = c.source_id;
        p["diagnosis"] = c.diagnosis_id;
        p["symptoms"] = ids(c.symptom_ids);
        p["treatments"] = ids(c.treatment_ids);
        p["induced_clusters"] = ids(c.induced_cluster_ids);
        t["induced_clusters"].push_back(std::move(p));
    }
    Tree tl = Tree::object();
    tl["past_history"] = ids(tail.past_history_ids);
    tl["family_history"] = Tree::array();
    for (const auto& f : tail.family_history) {
        Tree e = Tree::object();
        e["member"] = f.member;
        e["condition"] = f.condition;
        tl["family_history"].push_back(std::move(e));
    }
    tl["tests"] = Tree::array();
    for (const auto& [name, value] : tail.tests) {
        Tree e = Tree::object();
        e["field"] = name;
        e["text"] = value;
        tl["tests"].push_back(std::move(e));
    }
    t["tail"] = std::move(tl);
    t["ledger"] = Tree::array();
    for (const auto& [item, duration] : ledger) t["ledger"].push_back(item + "@" + (duration.empty() ? "-" : duration));
    return t;
}

std::string NarrativeOutline::to_yaml() const {
    return yaml::emit(to_tree(), {"symptoms", "treatments", "induced_clusters", "past_history"});
}

NarrativeOutline plan_outline(const SemanticGraph& g) { return Planner(g).run(); }

std::vector<std::string> identifier_violations(std::string_view s) {
    static const std::set<std::string, std::less<>> kPronouns = {
        "me", "my", "mine", "myself", "we", "our", "ours", "ourselves", "you", "your", "yours", "yourself"};
    static const std::set<std::string, std::less<>> kRomanContext = {"bipolar", "type", "class", "stage",
                                                                     "grade", "phase", "cluster", "axis"};
    static const std::set<std::string, std::less<>> kHonorifics = {"Mr", "Mrs", "Ms", "Miss", "Dr", "Prof"};

    std::vector<std::string> out;
    const auto words = split_words(s);
    for (std::size_t i = 0; i < words.size(); ++i) {
        const std::string w = strip_punct(words[i]);
        if (w.empty()) continue;
        const std::string prev = i > 0 ? text::to_lower(strip_punct(words[i - 1])) : std::string();
        if (kPronouns.count(text::to_lower(w)) || w == "us" || (w == "I" && !kRomanContext.count(prev)))
            out.push_back("first or second person '" + w + "'");
        if (i + 1 >= words.size()) continue;
        const std::string next = strip_punct(words[i + 1]);
        if (kHonorifics.count(w) && capitalized(next)) {
            out.push_back("personal name '" + w + " " + next + "'");
            continue;
        }
        const char last = words[i].back();
        if (last == '.' || last == ',' || last == ';' || last == ':' || last == '!' || last == '?') continue;
        if (capitalized(w) && capitalized(next) &&
            !(name_whitelist().count(w) && name_whitelist().count(next)))
            out.push_back("possible proper name '" + w + " " + next + "'");
    }
    return out;
}

std::string strip_meta_text(std::string_view reply) {
    static const std::regex kRole(R"(^\s*(assistant|user|system|narrator|lead|paragraph|answer|response|output)\s*:\s*)",
                                  std::regex::icase);
    std::vector<std::string> kept;
    std::string line;
    std::string input(reply);
    std::size_t pos = 0;
    while (pos <= input.size()) {
        const auto nl = input.find('\n', pos);
        line = input.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
        pos = nl == std::string::npos ? input.size() + 1 : nl + 1;
        std::smatch m;
        if (std::regex_search(line, m, kRole)) {
            line = m.suffix().str();
            if (text::trim(line).empty()) continue;
        }
        kept.push_back(line);
    }
    std::string out = text::trim(text::join(kept, "\n"));
    static const std::pair<std::string_view, std::string_view> kQuotes[] = {
        {"\"", "\""}, {"'", "'"}, {"\xe2\x80\x9c", "\xe2\x80\x9d"}, {"```", "```"}};
    for (bool changed = true; changed;) {
        changed = false;
        for (const auto& [open, close] : kQuotes) {
            if (out.size() >= open.size() + close.size() && out.compare(0, open.size(), open) == 0 &&
                out.compare(out.size() - close.size(), close.size(), close) == 0) {
                out = text::trim(out.substr(open.size(), out.size() - open.size() - close.size()));
                changed = true;
            }
        }
    }
    return out;
}

std::string narrate_lead(const NarrativeOutline& outline, Gateway& gw, const NarratorOptions& opt) {
    const auto& l = outline.lead;
    nlohmann::ordered_json summary = {{"age", l.age},
                                      {"sex", l.sex},
                                      {"setting", l.setting},
                                      {"arrival_mode", l.arrival_mode},
                                      {"reason_for_visit", l.reason},
                                      {"pathway", l.pathway ? nlohmann::ordered_json(*l.pathway) : nullptr},
                                      {"source_of_information", l.source},
                                      {"visit_episode", l.visit_episode}};
    const auto reply = complete_validated(
        gw, {"lead_paragraph", {{"summary", summary.dump(2)}}, {{"case_id", opt.case_id}}, opt.lead_temperature},
        opt.max_attempts, [](const std::string& raw) -> std::optional<std::string> {
            const std::string text = strip_meta_text(raw);
            const auto n = text::split_sentences(text).size();
            if (n < 2 || n > 5) return "expected two to five sentences, got " + std::to_string(n);
            if (auto v = identifier_violations(text); !v.empty()) return text::join(v, "; ");
            return std::nullopt;
        });
    if (!reply.accepted)
        throw GatewayError("lead_paragraph", "every lead was rejected: " + text::join(reply.rejections, " | "));
    return strip_meta_text(*reply.accepted);
}

HistoryText narrate_history(const NarrativeOutline& outline, const SemanticGraph& g, Gateway& gw,
                            const NarratorOptions& opt) {
    return HistoryWriter(outline, g, gw, opt).run();
}

HistoryText append_tail(const std::string& draft, const NarrativeOutline& outline, const SemanticGraph& g,
                        Gateway& gw, const NarratorOptions& opt) {
    if (text::trim(draft).empty()) throw Error("append_tail: empty draft");
    const TailLists lists = tail_lists(outline, g);
    if (lists.empty()) return {draft, {}};

    const auto draft_sentences = text::split_sentences(draft);
    std::set<std::string> known;
    for (const auto& s : draft_sentences) known.insert(text::normalize_ws(text::to_lower(s)));

    std::string appended;
    std::string reason;
    try {
        const auto reply = complete_validated(
            gw,
            {"append_tail",
             {{"draft", draft},
              {"past_history", tail_lines(lists.past_history)},
              {"family_history", tail_lines(lists.family_history)},
              {"tests", tail_lines(lists.tests)}},
             {{"case_id", opt.case_id}},
             opt.tail_temperature},
            opt.max_attempts, [&](const std::string& raw) -> std::optional<std::string> {
                std::string r = strip_meta_text(raw);
                if (r.size() >= draft.size() && r.compare(0, draft.size(), draft) == 0) {
                    r = text::trim(r.substr(draft.size()));
                } else {
                    for (const auto& s : text::split_sentences(r))
                        if (known.count(text::normalize_ws(text::to_lower(s))))
                            return std::string("restates the draft");
                    if (!draft_sentences.empty() && !r.empty()) {
                        const auto first = text::split_sentences(r).front();
                        if (trigram_jaccard(first, draft_sentences.front()) >= 0.5)
                            return std::string("rewrites the draft");
                    }
                }
                const auto n = text::split_sentences(r).size();
                if (n < 1 || n > 4) return "expected one to four appended sentences, got " + std::to_string(n);
                if (auto v = identifier_violations(r); !v.empty()) return text::join(v, "; ");
                appended = r;
                return std::nullopt;
            });
        if (reply.accepted) return {draft + "\n\n" + appended, {}};
        reason = reply.rejections.back();
    } catch (const GatewayError& e) {
        reason = e.what();
    }
    return {draft + "\n\n" + fallback_tail(lists), {"tail: fallback sentences (" + reason + ")"}};
}

GeneratedNarrative generate(const SemanticGraph& g, Gateway& gw, const NarratorOptions& opt) {
    GeneratedNarrative out;
    out.outline = plan_outline(g);
    const std::string lead = narrate_lead(out.outline, gw, opt);
    HistoryText history = narrate_history(out.outline, g, gw, opt);
    std::string draft = lead;
    if (!history.text.empty()) draft += "\n\n" + history.text;
    HistoryText full = append_tail(draft, out.outline, g, gw, opt);
    out.text = std::move(full.text);
    out.flags = std::move(history.flags);
    out.flags.insert(out.flags.end(), full.flags.begin(), full.flags.end());
    return out;
}

}  // namespace anonpsy
