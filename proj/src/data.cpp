#include "t2/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "t2/util.hpp"

namespace t2 {

double TransitionStats::type1_pct() const {
  return cross_total() == 0 ? 0.0 : 100.0 * static_cast<double>(type1) / cross_total();
}
double TransitionStats::type2_pct() const {
  return cross_total() == 0 ? 0.0 : 100.0 * static_cast<double>(type2) / cross_total();
}
double TransitionStats::other_pct() const {
  return cross_total() == 0 ? 0.0 : 100.0 * static_cast<double>(other) / cross_total();
}

namespace {

std::vector<std::string> split_fields(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, delim)) out.push_back(field);
  if (!line.empty() && line.back() == delim) out.push_back("");
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

int intern_item(IdMap& idmap, Domain d, const std::string& label) {
  auto& ids = d == Domain::A ? idmap.a_ids : idmap.b_ids;
  auto& names = d == Domain::A ? idmap.a_names : idmap.b_names;
  auto it = ids.find(label);
  if (it != ids.end()) return it->second;
  int id = static_cast<int>(names.size());
  ids.emplace(label, id);
  names.push_back(label);
  return id;
}

}  // namespace

ParseResult parse_interactions_text(const std::string& text, double rating_threshold,
                                    const std::string& origin) {
  ParseResult result;
  if (text.empty()) return result;  // empty file is an empty list, not an error

  std::istringstream in(text);
  std::string line;
  int lineno = 0;

  if (!std::getline(in, line)) return result;
  ++lineno;
  line = strip_cr(line);
  char delim = line.find('\t') != std::string::npos ? '\t' : ',';
  auto header = split_fields(line, delim);
  const std::vector<std::string> expected = {"user_id", "item_id", "domain", "rating",
                                             "timestamp"};
  if (header.size() != expected.size() || !std::equal(header.begin(), header.end(),
                                                      expected.begin())) {
    throw DataError(origin + ":1: expected header user_id,item_id,domain,rating,timestamp");
  }

  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_fields(line, delim);
    if (fields.size() != 5) {
      throw DataError(origin + ":" + std::to_string(lineno) + ": expected 5 fields, got " +
                      std::to_string(fields.size()));
    }
    Interaction ev;
    ev.user_id = fields[0];
    Domain domain;
    if (fields[2] == "A") {
      domain = Domain::A;
    } else if (fields[2] == "B") {
      domain = Domain::B;
    } else {
      throw DataError(origin + ":" + std::to_string(lineno) + ": unknown domain label '" +
                      fields[2] + "'");
    }
    ev.domain = domain;
    try {
      std::size_t used = 0;
      double rating = std::stod(fields[3], &used);
      if (used != fields[3].size()) throw std::invalid_argument("trailing chars");
      ev.feedback = rating > rating_threshold ? 1 : -1;
      ev.timestamp = std::stoll(fields[4], &used);
      if (used != fields[4].size()) throw std::invalid_argument("trailing chars");
    } catch (const std::exception&) {
      throw DataError(origin + ":" + std::to_string(lineno) + ": malformed numeric field");
    }
    ev.item_id = intern_item(result.idmap, domain, fields[1]);
    result.interactions.push_back(std::move(ev));
  }
  return result;
}

ParseResult parse_interactions(const std::string& path, double rating_threshold) {
  return parse_interactions_text(read_text_file(path), rating_threshold, path);
}

std::string serialize_interactions(const std::vector<Interaction>& interactions) {
  std::ostringstream out;
  out << "user_id,item_id,domain,rating,timestamp\n";
  for (const auto& ev : interactions) {
    out << ev.user_id << ',' << ev.item_id << ',' << domain_char(ev.domain) << ','
        << (ev.feedback > 0 ? 5 : 1) << ',' << ev.timestamp << '\n';
  }
  return out.str();
}

std::vector<UserHistory> build_histories(const std::vector<Interaction>& interactions,
                                         int min_per_domain,
                                         std::optional<std::int64_t> max_span_seconds) {
  // group by user, preserving first-appearance order of users
  std::vector<std::string> order;
  std::map<std::string, std::vector<Interaction>> by_user;
  for (const auto& ev : interactions) {
    auto [it, inserted] = by_user.try_emplace(ev.user_id);
    if (inserted) order.push_back(ev.user_id);
    it->second.push_back(ev);
  }

  std::vector<UserHistory> out;
  for (const auto& user : order) {
    auto events = by_user[user];
    std::stable_sort(events.begin(), events.end(),
                     [](const Interaction& x, const Interaction& y) {
                       return x.timestamp < y.timestamp;
                     });
    if (max_span_seconds && !events.empty()) {
      std::int64_t cutoff = events.back().timestamp - *max_span_seconds;
      events.erase(std::remove_if(events.begin(), events.end(),
                                  [&](const Interaction& ev) { return ev.timestamp < cutoff; }),
                   events.end());
    }
    UserHistory h;
    h.user_id = user;
    h.seq_c = events;
    for (const auto& ev : events) {
      (ev.domain == Domain::A ? h.seq_a : h.seq_b).push_back(ev);
    }
    if (static_cast<int>(h.seq_a.size()) < min_per_domain ||
        static_cast<int>(h.seq_b.size()) < min_per_domain) {
      continue;
    }
    out.push_back(std::move(h));
  }
  return out;
}

namespace {

UserHistory slice_history(const UserHistory& h, int count) {
  UserHistory out;
  out.user_id = h.user_id;
  out.seq_c.assign(h.seq_c.begin(), h.seq_c.begin() + count);
  for (const auto& ev : out.seq_c) {
    (ev.domain == Domain::A ? out.seq_a : out.seq_b).push_back(ev);
  }
  return out;
}

void count_items(const std::vector<UserHistory>& histories, int& items_a, int& items_b) {
  for (const auto& h : histories) {
    for (const auto& ev : h.seq_c) {
      int& n = ev.domain == Domain::A ? items_a : items_b;
      n = std::max(n, ev.item_id + 1);
    }
  }
}

}  // namespace

DatasetSplit chronological_split(const std::vector<UserHistory>& histories,
                                 SplitFractions fractions, bool global_by_timestamp) {
  double sum = fractions.train + fractions.validation + fractions.test;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw DataError("split fractions must sum to 1, got " + std::to_string(sum));
  }

  DatasetSplit split;
  count_items(histories, split.items_a, split.items_b);

  std::int64_t cut1_ts = 0, cut2_ts = 0;
  if (global_by_timestamp) {
    std::vector<std::int64_t> all_ts;
    for (const auto& h : histories)
      for (const auto& ev : h.seq_c) all_ts.push_back(ev.timestamp);
    std::sort(all_ts.begin(), all_ts.end());
    if (all_ts.empty()) return split;
    auto pick = [&](double f) {
      auto idx = static_cast<std::size_t>(std::floor(f * static_cast<double>(all_ts.size())));
      if (idx >= all_ts.size()) idx = all_ts.size() - 1;
      return all_ts[idx];
    };
    cut1_ts = pick(fractions.train);
    cut2_ts = pick(fractions.train + fractions.validation);
  }

  for (const auto& h : histories) {
    int n = static_cast<int>(h.seq_c.size());
    int n_train, n_val;
    if (global_by_timestamp) {
      n_train = static_cast<int>(std::count_if(h.seq_c.begin(), h.seq_c.end(),
                                               [&](const Interaction& ev) {
                                                 return ev.timestamp < cut1_ts;
                                               }));
      n_val = static_cast<int>(std::count_if(h.seq_c.begin(), h.seq_c.end(),
                                             [&](const Interaction& ev) {
                                               return ev.timestamp >= cut1_ts &&
                                                      ev.timestamp < cut2_ts;
                                             }));
    } else {
      n_train = static_cast<int>(std::floor(fractions.train * n));
      int n_through_val =
          static_cast<int>(std::floor((fractions.train + fractions.validation) * n));
      n_val = n_through_val - n_train;
    }
    int n_test = n - n_train - n_val;

    if (n_train >= 3) {
      split.train.push_back({slice_history(h, n_train), 1});
    }
    if (n_val >= 1 && n_train + n_val >= 3) {
      split.validation.push_back({slice_history(h, n_train + n_val), n_train});
    }
    if (n_test >= 1 && n >= 3) {
      split.test.push_back({slice_history(h, n), n_train + n_val});
    }
  }
  return split;
}

TransitionStats transition_stats(const std::vector<UserHistory>& histories) {
  TransitionStats stats;
  for (const auto& h : histories) {
    for (std::size_t t = 0; t + 1 < h.seq_c.size(); ++t) {
      const auto& cur = h.seq_c[t];
      const auto& nxt = h.seq_c[t + 1];
      if (cur.domain == nxt.domain) continue;
      if (cur.feedback > 0 && nxt.feedback < 0) {
        ++stats.type1;
      } else if (cur.feedback < 0 && nxt.feedback > 0) {
        ++stats.type2;
      } else {
        ++stats.other;
      }
    }
  }
  return stats;
}

namespace {

// Stationary feedback chain: at a cross-domain step a positive flips with
// probability q_pos (making a Type-1 pair) and a negative with q_neg
// (Type 2); same-domain steps flip with probability 1/2. Solves for
// (q_pos, q_neg) so the stationary rates hit the requested targets.
struct FeedbackPlan {
  double q_pos = 0, q_neg = 0, pi_pos = 0.5;
};

FeedbackPlan solve_feedback_plan(const SynthSpec& spec) {
  if (spec.type1_rate < 0 || spec.type2_rate < 0 ||
      spec.type1_rate + spec.type2_rate > 1.0 + 1e-12) {
    throw DataError("infeasible transition targets: type1 + type2 must be in [0, 1]");
  }
  const double c = spec.cross_prob;
  const double s = 0.5;  // same-domain flip probability
  FeedbackPlan plan;
  for (int iter = 0; iter < 200; ++iter) {
    plan.q_pos = plan.pi_pos > 1e-12 ? spec.type1_rate / plan.pi_pos : 2.0;
    plan.q_neg = 1.0 - plan.pi_pos > 1e-12 ? spec.type2_rate / (1.0 - plan.pi_pos) : 2.0;
    if (plan.q_pos > 1.0 + 1e-9 || plan.q_neg > 1.0 + 1e-9) {
      throw DataError("infeasible transition targets: required flip probability exceeds 1");
    }
    double to_neg = c * plan.q_pos + (1 - c) * s;
    double to_pos = c * plan.q_neg + (1 - c) * s;
    double denom = to_neg + to_pos;
    double next = denom > 1e-12 ? to_pos / denom : 0.5;
    if (std::abs(next - plan.pi_pos) < 1e-14) {
      plan.pi_pos = next;
      break;
    }
    plan.pi_pos = next;
  }
  return plan;
}

// Planted next-item rule: walk the catalog ring from the previous item by
// an offset keyed on its (domain, feedback) and the destination domain.
int planted_next(int prev_item, Domain prev_domain, int prev_feedback, Domain next_domain,
                 int next_catalog) {
  int key = (prev_domain == next_domain ? 0 : 2) + (prev_feedback > 0 ? 0 : 1);
  static const int offsets[4] = {1, 2, 3, 4};
  return (prev_item + offsets[key]) % next_catalog;
}

}  // namespace

std::vector<Interaction> generate_synthetic(const SynthSpec& spec) {
  if (spec.users <= 0 || spec.items_a <= 0 || spec.items_b <= 0) {
    throw DataError("infeasible spec: users and item counts must be positive");
  }
  if (spec.len_min < 2 || spec.len_max < spec.len_min) {
    throw DataError("infeasible spec: need len_max >= len_min >= 2");
  }
  FeedbackPlan plan = solve_feedback_plan(spec);

  std::vector<Interaction> out;
  std::mt19937_64 rng(splitmix64(spec.seed));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (int u = 0; u < spec.users; ++u) {
    char name[16];
    std::snprintf(name, sizeof(name), "u%05d", u);
    int len = spec.len_min +
              static_cast<int>(rng() % static_cast<std::uint64_t>(spec.len_max - spec.len_min + 1));
    std::int64_t ts = 1600000000LL + static_cast<std::int64_t>(u) * 1000000LL;

    Domain domain = unit(rng) < 0.5 ? Domain::A : Domain::B;
    int feedback = unit(rng) < plan.pi_pos ? 1 : -1;
    int catalog = domain == Domain::A ? spec.items_a : spec.items_b;
    int item = static_cast<int>(rng() % static_cast<std::uint64_t>(catalog));

    for (int t = 0; t < len; ++t) {
      out.push_back({name, item, domain, feedback, ts});
      if (t + 1 == len) break;
      ts += 3600;

      bool cross = unit(rng) < spec.cross_prob;
      Domain next_domain = cross ? (domain == Domain::A ? Domain::B : Domain::A) : domain;
      double flip_prob = cross ? (feedback > 0 ? plan.q_pos : plan.q_neg) : 0.5;
      int next_feedback = unit(rng) < flip_prob ? -feedback : feedback;
      int next_catalog = next_domain == Domain::A ? spec.items_a : spec.items_b;
      int next_item;
      if (spec.planted) {
        next_item = planted_next(item, domain, feedback, next_domain, next_catalog);
      } else {
        next_item = static_cast<int>(rng() % static_cast<std::uint64_t>(next_catalog));
      }
      domain = next_domain;
      feedback = next_feedback;
      item = next_item;
      catalog = next_catalog;
    }
  }
  return out;
}

// ---- persisted artifacts --------------------------------------------------

std::string history_to_json_line(const SplitEntry& entry) {
  nlohmann::ordered_json j;
  j["user"] = entry.history.user_id;
  j["eval_start"] = entry.eval_start;
  auto events = nlohmann::ordered_json::array();
  for (const auto& ev : entry.history.seq_c) {
    events.push_back({ev.item_id, std::string(1, domain_char(ev.domain)), ev.feedback,
                      ev.timestamp});
  }
  j["events"] = std::move(events);
  return j.dump();
}

SplitEntry history_from_json_line(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad history line: ") + e.what());
  }
  SplitEntry entry;
  entry.history.user_id = j.at("user").get<std::string>();
  entry.eval_start = j.at("eval_start").get<int>();
  for (const auto& item : j.at("events")) {
    Interaction ev;
    ev.user_id = entry.history.user_id;
    ev.item_id = item.at(0).get<int>();
    std::string d = item.at(1).get<std::string>();
    if (d != "A" && d != "B") throw DataError("bad domain in history line: " + d);
    ev.domain = d == "A" ? Domain::A : Domain::B;
    ev.feedback = item.at(2).get<int>();
    if (ev.feedback != 1 && ev.feedback != -1) {
      throw DataError("feedback must be +1 or -1 in history line");
    }
    ev.timestamp = item.at(3).get<std::int64_t>();
    entry.history.seq_c.push_back(ev);
    (ev.domain == Domain::A ? entry.history.seq_a : entry.history.seq_b).push_back(ev);
  }
  return entry;
}

void write_histories_jsonl(const std::string& path, const std::vector<SplitEntry>& entries) {
  std::ostringstream out;
  for (const auto& entry : entries) out << history_to_json_line(entry) << '\n';
  write_text_file(path, out.str());
}

std::vector<SplitEntry> read_histories_jsonl(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<SplitEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(history_from_json_line(line));
  }
  return out;
}

void write_idmap_json(const std::string& path, const IdMap& idmap) {
  nlohmann::ordered_json j;
  j["A"] = idmap.a_names;
  j["B"] = idmap.b_names;
  write_text_file(path, j.dump(2) + "\n");
}

IdMap read_idmap_json(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  IdMap idmap;
  idmap.a_names = j.at("A").get<std::vector<std::string>>();
  idmap.b_names = j.at("B").get<std::vector<std::string>>();
  for (std::size_t i = 0; i < idmap.a_names.size(); ++i)
    idmap.a_ids[idmap.a_names[i]] = static_cast<int>(i);
  for (std::size_t i = 0; i < idmap.b_names.size(); ++i)
    idmap.b_ids[idmap.b_names[i]] = static_cast<int>(i);
  return idmap;
}

void write_stats_json(const std::string& path, const TransitionStats& stats) {
  nlohmann::ordered_json j;
  j["type1_count"] = stats.type1;
  j["type2_count"] = stats.type2;
  j["other_count"] = stats.other;
  j["cross_pairs"] = stats.cross_total();
  j["type1_pct"] = stats.type1_pct();
  j["type2_pct"] = stats.type2_pct();
  j["other_pct"] = stats.other_pct();
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace t2
