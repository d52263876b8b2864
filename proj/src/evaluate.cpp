#include "t2/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "t2/util.hpp"

namespace t2 {

RankResult rank_and_score(const std::vector<double>& scores, int positive_index) {
  if (positive_index < 0 || positive_index >= static_cast<int>(scores.size())) {
    throw InternalError("rank_and_score: positive index out of range");
  }
  double positive = scores[positive_index];
  if (!std::isfinite(positive)) throw InternalError("rank_and_score: non-finite score");
  int greater = 0, equal = 0;
  for (int i = 0; i < static_cast<int>(scores.size()); ++i) {
    double s = scores[i];
    if (!std::isfinite(s)) throw InternalError("rank_and_score: non-finite score");
    if (i == positive_index) continue;
    if (s > positive) ++greater;
    else if (s == positive) ++equal;  // pessimistic: ties rank the positive last
  }
  RankResult r;
  r.rank = 1 + greater + equal;
  r.mrr10 = r.rank <= 10 ? 1.0 / r.rank : 0.0;
  r.ndcg5 = r.rank <= 5 ? 1.0 / std::log2(r.rank + 1.0) : 0.0;
  r.ndcg10 = r.rank <= 10 ? 1.0 / std::log2(r.rank + 1.0) : 0.0;
  r.hr1 = r.rank <= 1 ? 1.0 : 0.0;
  r.hr5 = r.rank <= 5 ? 1.0 : 0.0;
  r.hr10 = r.rank <= 10 ? 1.0 : 0.0;
  return r;
}

NegativeSample sample_negatives(int target, int catalog_size, const std::vector<int>& user_seen,
                                int n, std::uint64_t seed) {
  if (catalog_size <= 0) throw DataError("sample_negatives: empty catalog");
  std::set<int> excluded(user_seen.begin(), user_seen.end());
  excluded.insert(target);
  std::vector<int> avail;
  avail.reserve(catalog_size);
  for (int i = 0; i < catalog_size; ++i)
    if (!excluded.count(i)) avail.push_back(i);
  if (avail.empty()) {
    // the user has seen the whole catalog; fall back to everything but the target
    for (int i = 0; i < catalog_size; ++i)
      if (i != target) avail.push_back(i);
    if (avail.empty()) throw DataError("sample_negatives: catalog holds only the target");
  }

  std::mt19937_64 rng(splitmix64(seed));
  NegativeSample out;
  out.items.reserve(n);
  if (static_cast<int>(avail.size()) >= n) {
    // partial Fisher-Yates for n distinct draws
    for (int i = 0; i < n; ++i) {
      std::size_t j = i + rng() % (avail.size() - i);
      std::swap(avail[i], avail[j]);
      out.items.push_back(avail[i]);
    }
  } else {
    out.with_replacement = true;
    for (int i = 0; i < n; ++i) out.items.push_back(avail[rng() % avail.size()]);
  }
  return out;
}

namespace {

struct UserEncodings {
  Mat ec, ea, eb;  // empty when the side has no events
  std::vector<int> a_pos, b_pos;
  std::vector<int> c_feedbacks, a_feedbacks, b_feedbacks;
  std::vector<Domain> c_domains;
};

// Deterministic value-only forward of all three encoders for one entry.
UserEncodings encode_user(ModelParams& params, const PropagatedTables& tables,
                          const SplitEntry& entry, const TrainConfig& config, int last_event) {
  // window [start, last_event) of at most max_len events ending at last_event
  const auto& seq = entry.history.seq_c;
  int start = std::max(0, last_event - config.max_len);

  UserEncodings out;
  std::vector<int> c_items, a_items, b_items, positions;
  for (int i = start; i < last_event; ++i) {
    const auto& ev = seq[i];
    int pos = i - start;
    c_items.push_back(ev.domain == Domain::A ? ev.item_id : params.items_a() + ev.item_id);
    out.c_domains.push_back(ev.domain);
    out.c_feedbacks.push_back(ev.feedback);
    if (ev.domain == Domain::A) {
      a_items.push_back(ev.item_id);
      out.a_feedbacks.push_back(ev.feedback);
      out.a_pos.push_back(pos);
    } else {
      b_items.push_back(ev.item_id);
      out.b_feedbacks.push_back(ev.feedback);
      out.b_pos.push_back(pos);
    }
  }
  BlockOptions options;
  options.mode = config.mask_mode;
  options.causal = config.causal;
  options.dropout = 0.0;
  options.training = false;
  options.cross_schedule = config.cross_schedule;
  options.single_schedule = config.single_schedule;

  ad::Tape tape;
  auto run = [&](const Mat& table, const Mat& pos_table, const std::vector<int>& items,
                 const std::vector<Domain>& domains, const std::vector<int>& feedbacks,
                 BlockScope scope, const AttentionParams& block_params) {
    std::vector<int> pos_idx(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) pos_idx[i] = static_cast<int>(i);
    MaskSet masks = build_mask_set(domains, feedbacks);
    int e_hat = tape.add(tape.gather_rows(tape.leaf(table), items),
                         tape.gather_rows(tape.leaf(pos_table), pos_idx));
    int node = apply_block(tape, e_hat, masks, scope, make_block_leaves(tape, block_params),
                           options);
    return tape.value(node);
  };

  if (!c_items.empty()) {
    out.ec = run(tables.c, params.pos_c, c_items, out.c_domains, out.c_feedbacks,
                 BlockScope::Cross, params.block_c);
  }
  if (!a_items.empty()) {
    std::vector<Domain> doms(a_items.size(), Domain::A);
    out.ea = run(tables.a, params.pos_a, a_items, doms, out.a_feedbacks, BlockScope::Single,
                 params.block_a);
  }
  if (!b_items.empty()) {
    std::vector<Domain> doms(b_items.size(), Domain::B);
    out.eb = run(tables.b, params.pos_b, b_items, doms, out.b_feedbacks, BlockScope::Single,
                 params.block_b);
  }
  return out;
}

Eigen::RowVectorXd prefix_rep(const Mat& encoding, int upto, PredPool pool) {
  if (pool == PredPool::Last) return encoding.row(upto - 1);
  return encoding.topRows(upto).colwise().mean();
}

void add_metrics(MetricsTable& table, const RankResult& r) {
  table.mrr10 += r.mrr10;
  table.ndcg5 += r.ndcg5;
  table.ndcg10 += r.ndcg10;
  table.hr1 += r.hr1;
  table.hr5 += r.hr5;
  table.hr10 += r.hr10;
  ++table.events;
}

void finish_metrics(MetricsTable& table) {
  if (table.events == 0) return;
  double n = static_cast<double>(table.events);
  table.mrr10 /= n;
  table.ndcg5 /= n;
  table.ndcg10 /= n;
  table.hr1 /= n;
  table.hr5 /= n;
  table.hr10 /= n;
}

}  // namespace

EvalResult evaluate(ModelParams& params, const DatasetSplit& split, EvalSlice slice,
                    const TransitionGraphs& graphs, const TrainConfig& config, std::uint64_t seed,
                    int negatives) {
  const std::vector<SplitEntry>* entries = nullptr;
  switch (slice) {
    case EvalSlice::Train: entries = &split.train; break;
    case EvalSlice::Validation: entries = &split.validation; break;
    case EvalSlice::Test: entries = &split.test; break;
  }
  PropagatedTables tables = propagate_tables(params, graphs, config);

  EvalResult result;
  MetricsTable sums_a, sums_b, sums_all;
  for (const SplitEntry& entry : *entries) {
    const int n = static_cast<int>(entry.history.seq_c.size());
    const int first = std::max(1, entry.eval_start);
    if (first >= n && slice != EvalSlice::Train) continue;

    // with causal attention one full-sequence pass covers every event;
    // longer-than-max_len histories fall back to per-event windows
    bool shared = config.causal && n <= config.max_len;
    UserEncodings enc;
    if (shared) enc = encode_user(params, tables, entry, config, n);

    std::uint64_t user_hash = fnv1a64(entry.history.user_id);
    for (int t = first; t < n; ++t) {
      const Interaction& target_ev = entry.history.seq_c[t];
      const bool is_a = target_ev.domain == Domain::A;
      int catalog = is_a ? params.items_a() : params.items_b();

      Eigen::RowVectorXd rep;
      if (shared) {
        rep = prefix_rep(enc.ec, t, config.pred_pool);
      } else {
        UserEncodings local = encode_user(params, tables, entry, config, t);
        rep = prefix_rep(local.ec, static_cast<int>(local.ec.rows()), config.pred_pool);
      }

      std::vector<int> seen;
      for (int i = 0; i < t; ++i) {
        const auto& ev = entry.history.seq_c[i];
        if (ev.domain == target_ev.domain) seen.push_back(ev.item_id);
      }
      NegativeSample negs = sample_negatives(target_ev.item_id, catalog, seen, negatives,
                                             mix_seed(seed, user_hash, t));
      if (negs.with_replacement) ++result.replacement_warnings;

      const Mat& w = is_a ? params.head_a_w : params.head_b_w;
      const Mat& b = is_a ? params.head_a_b : params.head_b_b;
      std::vector<double> scores;
      scores.reserve(negs.items.size() + 1);
      scores.push_back(rep.dot(w.col(target_ev.item_id)) + b(0, target_ev.item_id));
      for (int item : negs.items) scores.push_back(rep.dot(w.col(item)) + b(0, item));

      RankResult r = rank_and_score(scores, 0);
      add_metrics(is_a ? sums_a : sums_b, r);
      add_metrics(sums_all, r);
    }
  }
  finish_metrics(sums_a);
  finish_metrics(sums_b);
  finish_metrics(sums_all);
  result.domain_a = sums_a;
  result.domain_b = sums_b;
  result.overall = sums_all;
  return result;
}

namespace {

nlohmann::ordered_json table_json(const MetricsTable& t) {
  nlohmann::ordered_json j;
  j["MRR@10"] = t.mrr10;
  j["NDCG@5"] = t.ndcg5;
  j["NDCG@10"] = t.ndcg10;
  j["HR@1"] = t.hr1;
  j["HR@5"] = t.hr5;
  j["HR@10"] = t.hr10;
  j["events"] = t.events;
  return j;
}

}  // namespace

std::string metrics_to_json(const EvalResult& result) {
  nlohmann::ordered_json j;
  j["A"] = table_json(result.domain_a);
  j["B"] = table_json(result.domain_b);
  j["overall"] = table_json(result.overall);
  j["replacement_warnings"] = result.replacement_warnings;
  return j.dump(2) + "\n";
}

std::string metrics_to_csv(const EvalResult& result) {
  std::ostringstream out;
  out << "domain,MRR@10,NDCG@5,NDCG@10,HR@1,HR@5,HR@10,events\n";
  auto row = [&](const char* name, const MetricsTable& t) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%lld\n", name, t.mrr10,
                  t.ndcg5, t.ndcg10, t.hr1, t.hr5, t.hr10, static_cast<long long>(t.events));
    out << buf;
  };
  row("A", result.domain_a);
  row("B", result.domain_b);
  row("overall", result.overall);
  return out.str();
}

// ---- diagnostics ----------------------------------------------------------

namespace {

double cosine(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& y) {
  double nx = x.norm(), ny = y.norm();
  if (nx == 0 || ny == 0) return 0.0;
  return x.dot(y) / (nx * ny);
}

struct MeanAcc {
  double sum = 0;
  std::int64_t n = 0;
  void add(double v) {
    sum += v;
    ++n;
  }
  std::optional<double> mean() const {
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  }
};

void pairwise_sims(const Mat& e, const std::vector<int>& pos, const std::vector<int>& neg,
                   MeanAcc& pp, MeanAcc& pn, MeanAcc& nn) {
  for (std::size_t i = 0; i < pos.size(); ++i)
    for (std::size_t j = i + 1; j < pos.size(); ++j)
      pp.add(cosine(e.row(pos[i]), e.row(pos[j])));
  for (std::size_t i = 0; i < neg.size(); ++i)
    for (std::size_t j = i + 1; j < neg.size(); ++j)
      nn.add(cosine(e.row(neg[i]), e.row(neg[j])));
  for (int i : pos)
    for (int j : neg) pn.add(cosine(e.row(i), e.row(j)));
}

}  // namespace

SimilarityReport similarity_diagnostics(ModelParams& params, const DatasetSplit& split,
                                        const TransitionGraphs& graphs,
                                        const TrainConfig& config) {
  PropagatedTables tables = propagate_tables(params, graphs, config);
  MeanAcc align_a, align_b, pp, pn, nn;

  for (const SplitEntry& entry : split.train) {
    int n = static_cast<int>(entry.history.seq_c.size());
    if (n == 0) continue;
    UserEncodings enc = encode_user(params, tables, entry, config, n);

    if (enc.ea.size() > 0 && !enc.a_pos.empty()) {
      Eigen::RowVectorXd single = enc.ea.colwise().mean();
      Eigen::RowVectorXd cross = Eigen::RowVectorXd::Zero(enc.ec.cols());
      for (int p : enc.a_pos) cross += enc.ec.row(p);
      cross /= static_cast<double>(enc.a_pos.size());
      align_a.add(cosine(single, cross));
    }
    if (enc.eb.size() > 0 && !enc.b_pos.empty()) {
      Eigen::RowVectorXd single = enc.eb.colwise().mean();
      Eigen::RowVectorXd cross = Eigen::RowVectorXd::Zero(enc.ec.cols());
      for (int p : enc.b_pos) cross += enc.ec.row(p);
      cross /= static_cast<double>(enc.b_pos.size());
      align_b.add(cosine(single, cross));
    }

    auto by_feedback = [](const std::vector<int>& feedbacks) {
      std::pair<std::vector<int>, std::vector<int>> out;
      for (std::size_t i = 0; i < feedbacks.size(); ++i)
        (feedbacks[i] > 0 ? out.first : out.second).push_back(static_cast<int>(i));
      return out;
    };
    if (enc.ea.size() > 0) {
      auto [p, ng] = by_feedback(enc.a_feedbacks);
      pairwise_sims(enc.ea, p, ng, pp, pn, nn);
    }
    if (enc.eb.size() > 0) {
      auto [p, ng] = by_feedback(enc.b_feedbacks);
      pairwise_sims(enc.eb, p, ng, pp, pn, nn);
    }
  }

  SimilarityReport report;
  report.align_a = align_a.mean();
  report.align_b = align_b.mean();
  report.sim_pp = pp.mean();
  report.sim_pn = pn.mean();
  report.sim_nn = nn.mean();
  return report;
}

std::string similarity_to_json(const SimilarityReport& report) {
  nlohmann::ordered_json j;
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
    else j[key] = nullptr;
  };
  put("align_cosine_A", report.align_a);
  put("align_cosine_B", report.align_b);
  put("sim_pp", report.sim_pp);
  put("sim_pn", report.sim_pn);
  put("sim_nn", report.sim_nn);
  return j.dump(2) + "\n";
}

std::string similarity_to_svg(const SimilarityReport& report) {
  struct Bar {
    const char* label;
    std::optional<double> value;
  };
  const Bar bars[] = {{"align_A", report.align_a},
                      {"align_B", report.align_b},
                      {"sim(p,p)", report.sim_pp},
                      {"sim(p,n)", report.sim_pn},
                      {"sim(n,n)", report.sim_nn}};
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"420\" height=\"220\">\n";
  out << "<line x1=\"40\" y1=\"110\" x2=\"410\" y2=\"110\" stroke=\"black\"/>\n";
  int x = 60;
  for (const Bar& bar : bars) {
    if (bar.value) {
      double v = std::clamp(*bar.value, -1.0, 1.0);
      int h = static_cast<int>(std::abs(v) * 90);
      int y = v >= 0 ? 110 - h : 110;
      out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"40\" height=\"" << h
          << "\" fill=\"steelblue\"/>\n";
    }
    out << "<text x=\"" << x << "\" y=\"215\" font-size=\"10\">" << bar.label << "</text>\n";
    x += 70;
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace t2
