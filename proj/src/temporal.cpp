#include "anonpsy/temporal.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "anonpsy/error.hpp"

namespace anonpsy {

namespace {

Day end_of(const RawEpisode& e) {
    const Day f = days_per(e.unit);
    return e.offset * f + std::max<Day>(*e.span * f, 1);
}

std::vector<std::string> duration_ids_in_use(const SemanticGraph& g) {
    std::vector<std::string> ids;
    for (const auto& d : g.durations) ids.push_back(d.id);
    return ids;
}

template <class Fn>
void for_each_timed_node(SemanticGraph& g, Fn&& fn) {
    for (auto& n : g.symptoms) fn(n.id, n.duration_ids);
    for (auto& n : g.treatments) fn(n.id, n.duration_ids);
    for (auto& n : g.past_history) fn(n.id, n.duration_ids);
}

template <class Fn>
void for_each_timed_node(const SemanticGraph& g, Fn&& fn) {
    for (const auto& n : g.symptoms) fn(n.id, n.duration_ids);
    for (const auto& n : g.treatments) fn(n.id, n.duration_ids);
    for (const auto& n : g.past_history) fn(n.id, n.duration_ids);
}

void sort_refs_by_time(const SemanticGraph& g, std::vector<std::string>& ids) {
    std::stable_sort(ids.begin(), ids.end(), [&](const std::string& a, const std::string& b) {
        const auto* x = g.find_duration(a);
        const auto* y = g.find_duration(b);
        if (!x || !y) return false;
        if (x->start() != y->start()) return x->start() < y->start();
        return a < b;
    });
}

bool remove_unreferenced(SemanticGraph& g) {
    std::set<std::string> used;
    for_each_timed_node(std::as_const(g), [&](const std::string&, const std::vector<std::string>& ids) {
        used.insert(ids.begin(), ids.end());
    });
    const auto before = g.durations.size();
    std::erase_if(g.durations, [&](const DurationInterval& d) { return !used.count(d.id); });
    return g.durations.size() != before;
}

bool covers_day0(const SemanticGraph& g, const std::vector<std::string>& ids) {
    return std::any_of(ids.begin(), ids.end(), [&](const std::string& id) {
        const auto* d = g.find_duration(id);
        return d && d->covers(0);
    });
}

}  // namespace

std::string fresh_id(std::string_view prefix, const std::vector<std::string>& used) {
    long next = 1;
    for (const auto& id : used) {
        if (id.size() <= prefix.size() || id.compare(0, prefix.size(), prefix) != 0) continue;
        const std::string digits = id.substr(prefix.size());
        if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; }))
            continue;
        if (digits.size() > 9) continue;
        next = std::max(next, std::stol(digits) + 1);
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%03ld", next);
    return std::string(prefix) + buf;
}

DaySpan to_days(const RawEpisode& e, const TimelineHorizon& h) {
    const Day f = days_per(e.unit);
    const Day start = e.offset * f;
    if (e.span) return {start, std::max<Day>(*e.span * f, 1)};
    if (!e.ongoing) throw Error("episode has no span and is not ongoing");
    const Day span = h.horizon_end_days - start;
    if (span <= 0) throw Error("empty interval");
    return {start, span};
}

TimelineHorizon compute_horizon(const std::vector<RawEpisode>& episodes) {
    TimelineHorizon h;
    for (const auto& e : episodes)
        if (e.span) h.horizon_end_days = std::max(h.horizon_end_days, end_of(e));
    return h;
}

SemanticGraph dedup_durations(SemanticGraph g) {
    std::map<std::pair<Day, Day>, std::vector<const DurationInterval*>> groups;
    for (const auto& d : g.durations) groups[{d.offset_days, d.span_days}].push_back(&d);

    std::map<std::string, std::string> rename;
    std::vector<DurationInterval> kept;
    for (auto& [key, members] : groups) {
        const auto* keep = *std::min_element(members.begin(), members.end(),
                                             [](const auto* a, const auto* b) { return a->id < b->id; });
        DurationInterval d = *keep;
        for (const auto* m : members) {
            d.age_anchored = d.age_anchored && m->age_anchored;
            rename[m->id] = d.id;
        }
        kept.push_back(std::move(d));
    }
    g.durations = std::move(kept);

    for_each_timed_node(g, [&](const std::string&, std::vector<std::string>& ids) {
        std::vector<std::string> out;
        for (const auto& id : ids) {
            auto it = rename.find(id);
            const std::string& target = it == rename.end() ? id : it->second;
            if (std::find(out.begin(), out.end(), target) == out.end()) out.push_back(target);
        }
        ids = std::move(out);
    });
    g.sort_canonical();
    return g;
}

SemanticGraph reconcile_node_intervals(SemanticGraph g) {
    g.sort_canonical();
    for (;;) {
        bool changed = false;
        std::vector<DurationInterval> created;
        std::vector<std::string> used = duration_ids_in_use(g);

        for_each_timed_node(g, [&](const std::string&, std::vector<std::string>& ids) {
            std::vector<const DurationInterval*> iv;
            for (const auto& id : ids)
                if (const auto* d = g.find_duration(id)) iv.push_back(d);
            std::sort(iv.begin(), iv.end(), [](const auto* a, const auto* b) {
                return a->start() != b->start() ? a->start() < b->start() : a->id < b->id;
            });

            std::vector<std::string> out;
            std::size_t i = 0;
            while (i < iv.size()) {
                std::size_t j = i + 1;
                Day end = iv[i]->end();
                bool anchored = iv[i]->age_anchored;
                while (j < iv.size() && iv[j]->start() <= end) {
                    end = std::max(end, iv[j]->end());
                    anchored = anchored && iv[j]->age_anchored;
                    ++j;
                }
                if (j - i == 1) {
                    out.push_back(iv[i]->id);
                } else {
                    DurationInterval merged;
                    merged.id = fresh_id("dvm_", used);
                    used.push_back(merged.id);
                    merged.offset_days = iv[i]->start();
                    merged.span_days = end - iv[i]->start();
                    merged.is_virtual = true;
                    merged.age_anchored = anchored;
                    out.push_back(merged.id);
                    created.push_back(std::move(merged));
                    changed = true;
                }
                i = j;
            }
            // dangling references are left for validate_graph to report
            for (const auto& id : ids)
                if (!g.find_duration(id)) out.push_back(id);
            ids = std::move(out);
        });

        for (auto& d : created) g.durations.push_back(std::move(d));
        if (changed) g = dedup_durations(std::move(g));
        changed = remove_unreferenced(g) || changed;
        if (!changed) break;
    }
    for_each_timed_node(g, [&](const std::string&, std::vector<std::string>& ids) { sort_refs_by_time(g, ids); });
    g.sort_canonical();
    return g;
}

SemanticGraph recompute_current_flags(SemanticGraph g) {
    for (auto& s : g.symptoms) s.current_symptom = covers_day0(g, s.duration_ids);
    return g;
}

SemanticGraph split_multi_episode_symptoms(SemanticGraph g) {
    g.sort_canonical();
    std::vector<std::string> used;
    for (const auto& s : g.symptoms) used.push_back(s.id);

    std::vector<SymptomNode> added;
    std::vector<Relation> new_relations;
    for (auto& s : g.symptoms) {
        if (s.duration_ids.size() <= 1) continue;
        std::vector<std::string> ids = s.duration_ids;
        sort_refs_by_time(g, ids);

        std::vector<SymptomNode> parts(ids.size(), s);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            parts[i].duration_ids = {ids[i]};
            parts[i].contexts.clear();
            if (i > 0) {
                parts[i].id = fresh_id("s_", used);
                used.push_back(parts[i].id);
            }
        }
        for (std::size_t c = 0; c < s.contexts.size(); ++c)
            parts[std::min(c, parts.size() - 1)].contexts.push_back(s.contexts[c]);

        for (const auto& r : g.relations) {
            if (r.source != s.id && r.target != s.id) continue;
            for (std::size_t i = 1; i < parts.size(); ++i) {
                Relation copy = r;
                if (copy.source == s.id) copy.source = parts[i].id;
                if (copy.target == s.id) copy.target = parts[i].id;
                new_relations.push_back(std::move(copy));
            }
        }
        s = parts[0];
        for (std::size_t i = 1; i < parts.size(); ++i) added.push_back(std::move(parts[i]));
    }
    for (auto& n : added) g.symptoms.push_back(std::move(n));
    for (auto& r : new_relations)
        if (std::find(g.relations.begin(), g.relations.end(), r) == g.relations.end())
            g.relations.push_back(std::move(r));
    g = recompute_current_flags(std::move(g));
    g.sort_canonical();
    return g;
}

SemanticGraph canonicalize_timeline(SemanticGraph g) {
    g = dedup_durations(std::move(g));
    g = reconcile_node_intervals(std::move(g));
    g = recompute_current_flags(std::move(g));
    return split_multi_episode_symptoms(std::move(g));
}

TemporalSignature temporal_signature(const SemanticGraph& g) {
    TemporalSignature sig;
    for_each_timed_node(g, [&](const std::string& node, const std::vector<std::string>& ids) {
        auto& list = sig[node];
        for (const auto& id : ids)
            if (const auto* d = g.find_duration(id)) list.emplace_back(d->start(), d->end());
        std::sort(list.begin(), list.end());
    });
    return sig;
}

}  // namespace anonpsy
