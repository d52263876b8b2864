#pragma once

#include <Eigen/Dense>
#include <string>
#include <tuple>
#include <vector>

#include "t2/types.hpp"

namespace t2 {

using Mat = Eigen::MatrixXd;

enum class GraphKind { A, B, C };

// Divisor of the layer average: KPlus1 uses 1/(K+1) over the K+1 terms,
// Literal uses 1/max(K,1) as printed.
enum class LayerMeanRule { KPlus1, Literal };

// Signed item-item transition graph. Edges hold the majority sign of the
// observed adjacent-pair feedback agreements; zero-sum pairs are dropped.
struct SignedGraph {
  int n = 0;
  std::vector<std::tuple<int, int, int>> edges;  // (i, j, sign) with i < j
  std::vector<int> degree;                       // distinct-neighbour count

  // Normalized adjacency in coordinate form, both directions stored.
  std::vector<int> coo_row;
  std::vector<int> coo_col;
  std::vector<double> coo_val;
  bool normalized = false;
};

// Accumulates adjacent-pair sign counters over the selected sequences of
// the train histories and keeps the majority sign per unordered pair.
// For GraphKind::C, domain-B items occupy node ids [items_a, items_a+items_b).
SignedGraph build_transition_matrix(const std::vector<SplitEntry>& train_histories,
                                    GraphKind which, int items_a, int items_b);

// Fills coo_* with sign / sqrt(deg_i * deg_j); zero-degree rows stay empty.
void normalize_adjacency(SignedGraph& graph);

// K rounds of E <- W_hat * E, then the layer average per `rule`.
Mat propagate(const SignedGraph& graph, const Mat& e0, int k, LayerMeanRule rule);

// graph.json payload for the inspect-graph command.
std::string graph_to_json(const SignedGraph& graph);

}  // namespace t2
