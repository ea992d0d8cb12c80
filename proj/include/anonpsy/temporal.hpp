#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "anonpsy/graph.hpp"

namespace anonpsy {

struct TimelineHorizon {
    Day horizon_end_days = 1;
};

struct DaySpan {
    Day start = 0;
    Day span = 1;

    bool operator==(const DaySpan&) const = default;
};

/// Converts an episode to days. Ongoing episodes without a span run to the horizon end; a zero
/// span becomes one day. Throws Error("empty interval") when an ongoing episode starts at or after
/// the horizon end, and Error when a finished episode has no span.
DaySpan to_days(const RawEpisode& e, const TimelineHorizon& h);

/// horizon_end = max(1, largest end among episodes with a resolved span).
TimelineHorizon compute_horizon(const std::vector<RawEpisode>& episodes);

/// Collapses durations with equal (offset, span) to the smallest id and rewrites references.
SemanticGraph dedup_durations(SemanticGraph g);

/// Merges overlapping or adjacent intervals of each node into virtual durations, repeats dedup and
/// unreferenced-duration removal until nothing changes.
SemanticGraph reconcile_node_intervals(SemanticGraph g);

/// current_symptom := some referenced interval covers day 0.
SemanticGraph recompute_current_flags(SemanticGraph g);

/// One symptom node per interval. The earliest episode keeps the original id; contexts are paired
/// in temporal order with surplus contexts on the last node; relations are copied to every split node.
SemanticGraph split_multi_episode_symptoms(SemanticGraph g);

/// dedup, reconcile, recompute, split and recompute again.
SemanticGraph canonicalize_timeline(SemanticGraph g);

using TemporalSignature = std::map<std::string, std::vector<std::pair<Day, Day>>>;

/// node id -> sorted (start, end) pairs of its intervals.
TemporalSignature temporal_signature(const SemanticGraph& g);

/// Next free id of the form `<prefix>NNN` given ids already in use.
std::string fresh_id(std::string_view prefix, const std::vector<std::string>& used);

}  // namespace anonpsy
