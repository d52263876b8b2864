#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "t2/types.hpp"

namespace t2 {

// Original id -> dense id, one map per domain. Persisted as idmap.json.
struct IdMap {
  std::vector<std::string> a_names;  // dense id -> original label
  std::vector<std::string> b_names;
  std::map<std::string, int> a_ids;
  std::map<std::string, int> b_ids;
  int size(Domain d) const {
    return static_cast<int>(d == Domain::A ? a_names.size() : b_names.size());
  }
};

struct ParseResult {
  std::vector<Interaction> interactions;
  IdMap idmap;
};

// Reads `user_id,item_id,domain,rating,timestamp` rows (comma or tab).
// feedback = +1 iff rating > threshold. Item ids are re-indexed densely
// per domain in order of first appearance.
ParseResult parse_interactions(const std::string& path, double rating_threshold);

// Same parser over an in-memory buffer; `origin` only labels error messages.
ParseResult parse_interactions_text(const std::string& text, double rating_threshold,
                                    const std::string& origin = "<memory>");

// Canonical file form of a parsed interaction list (dense ids, feedback
// rendered as rating 5 / 1 so a re-parse with threshold 3 is the identity).
std::string serialize_interactions(const std::vector<Interaction>& interactions);

// Group by user, sort stably by timestamp, drop users with fewer than
// min_per_domain items in either domain. max_span_seconds, when set,
// keeps only each user's trailing window of that many seconds before
// the min-per-domain filter (the one-year rule for real data).
std::vector<UserHistory> build_histories(const std::vector<Interaction>& interactions,
                                         int min_per_domain,
                                         std::optional<std::int64_t> max_span_seconds = {});

struct SplitFractions {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

// Per-user chronological cut at floor(f_tr*n) and floor((f_tr+f_va)*n).
// With global_by_timestamp the two cut points are global timestamp
// percentiles instead and each event falls in the slice of its timestamp.
DatasetSplit chronological_split(const std::vector<UserHistory>& histories,
                                 SplitFractions fractions,
                                 bool global_by_timestamp = false);

TransitionStats transition_stats(const std::vector<UserHistory>& histories);

struct SynthSpec {
  int users = 200;
  int items_a = 50;
  int items_b = 50;
  int len_min = 12;
  int len_max = 20;
  double type1_rate = 0.1831;  // fraction of cross-domain adjacent pairs
  double type2_rate = 0.1828;
  double cross_prob = 0.5;     // chance an adjacent pair switches domain
  bool planted = false;        // next item = f(prev item, its domain/feedback, next domain)
  std::uint64_t seed = 1;
};

// Deterministic per seed; output round-trips through parse_interactions.
std::vector<Interaction> generate_synthetic(const SynthSpec& spec);

// ---- persisted artifacts ----------------------------------------------

std::string history_to_json_line(const SplitEntry& entry);
SplitEntry history_from_json_line(const std::string& line);

void write_histories_jsonl(const std::string& path, const std::vector<SplitEntry>& entries);
std::vector<SplitEntry> read_histories_jsonl(const std::string& path);

void write_idmap_json(const std::string& path, const IdMap& idmap);
IdMap read_idmap_json(const std::string& path);

void write_stats_json(const std::string& path, const TransitionStats& stats);

}  // namespace t2
