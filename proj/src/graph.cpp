#include "t2/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <json.hpp>

namespace t2 {

namespace {

int node_id(const Interaction& ev, GraphKind which, int items_a) {
  if (which == GraphKind::C && ev.domain == Domain::B) return items_a + ev.item_id;
  return ev.item_id;
}

const std::vector<Interaction>& pick_sequence(const UserHistory& h, GraphKind which) {
  switch (which) {
    case GraphKind::A: return h.seq_a;
    case GraphKind::B: return h.seq_b;
    default: return h.seq_c;
  }
}

}  // namespace

SignedGraph build_transition_matrix(const std::vector<SplitEntry>& train_histories,
                                    GraphKind which, int items_a, int items_b) {
  SignedGraph g;
  switch (which) {
    case GraphKind::A: g.n = items_a; break;
    case GraphKind::B: g.n = items_b; break;
    case GraphKind::C: g.n = items_a + items_b; break;
  }

  // signed counter per unordered pair; zero-sum pairs drop out
  std::map<std::pair<int, int>, long long> counter;
  for (const auto& entry : train_histories) {
    const auto& seq = pick_sequence(entry.history, which);
    for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
      int i = node_id(seq[t], which, items_a);
      int j = node_id(seq[t + 1], which, items_a);
      if (i == j) continue;  // no self-loops
      if (i > j) std::swap(i, j);
      counter[{i, j}] += seq[t].feedback == seq[t + 1].feedback ? 1 : -1;
    }
  }

  g.degree.assign(g.n, 0);
  for (const auto& [pair, count] : counter) {
    if (count == 0) continue;
    int sign = count > 0 ? 1 : -1;
    g.edges.emplace_back(pair.first, pair.second, sign);
    ++g.degree[pair.first];
    ++g.degree[pair.second];
  }
  normalize_adjacency(g);
  return g;
}

void normalize_adjacency(SignedGraph& graph) {
  graph.coo_row.clear();
  graph.coo_col.clear();
  graph.coo_val.clear();
  for (const auto& [i, j, sign] : graph.edges) {
    double v = sign / std::sqrt(static_cast<double>(graph.degree[i]) *
                                static_cast<double>(graph.degree[j]));
    graph.coo_row.push_back(i);
    graph.coo_col.push_back(j);
    graph.coo_val.push_back(v);
    graph.coo_row.push_back(j);
    graph.coo_col.push_back(i);
    graph.coo_val.push_back(v);
  }
  graph.normalized = true;
}

Mat propagate(const SignedGraph& graph, const Mat& e0, int k, LayerMeanRule rule) {
  if (e0.rows() != graph.n) {
    throw InternalError("propagate: embedding rows " + std::to_string(e0.rows()) +
                        " != node count " + std::to_string(graph.n));
  }
  if (!graph.normalized) throw InternalError("propagate: graph not normalized");
  if (k < 0) throw InternalError("propagate: negative layer count");

  Mat sum = e0;
  Mat layer = e0;
  for (int step = 0; step < k; ++step) {
    Mat next = Mat::Zero(e0.rows(), e0.cols());
    for (std::size_t idx = 0; idx < graph.coo_val.size(); ++idx) {
      next.row(graph.coo_row[idx]) += graph.coo_val[idx] * layer.row(graph.coo_col[idx]);
    }
    layer = std::move(next);
    sum += layer;
  }
  double divisor = rule == LayerMeanRule::KPlus1 ? k + 1 : std::max(k, 1);
  return sum / divisor;
}

std::string graph_to_json(const SignedGraph& graph) {
  nlohmann::ordered_json j;
  j["nodes"] = graph.n;
  auto edges = nlohmann::ordered_json::array();
  for (const auto& [i, jdx, sign] : graph.edges) edges.push_back({i, jdx, sign});
  j["edges"] = std::move(edges);
  j["degree"] = graph.degree;
  return j.dump(2) + "\n";
}

}  // namespace t2
