#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "t2/graph.hpp"
#include "t2/masks.hpp"

namespace t2::ad {

using Mat = Eigen::MatrixXd;

// Reverse-mode tape over dense double matrices. Nodes are referenced by
// index; a tape is built per training step and discarded afterwards.
// Scalars are 1x1 matrices.
class Tape {
 public:
  int leaf(Mat value);

  int matmul(int a, int b);
  int transpose(int a);
  int add(int a, int b);
  int sub(int a, int b);
  int scale(int a, double s);
  int cmul(int a, int b);
  int relu(int a);

  // Broadcast-add a 1xN bias row to every row of a.
  int add_row(int a, int bias_row);

  // Elementwise multiply by a constant 0/1 grid (no gradient to the grid).
  int mask01(int a, const BoolGrid& grid);

  // Row softmax over all entries.
  int softmax_rows(int a);

  // Row softmax with disallowed entries at -inf. A row with no allowed
  // entry yields an all-zero probability row.
  int softmax_rows_masked(int scores, const BoolGrid& allowed);

  int gather_rows(int table, std::vector<int> rows);
  int mean_rows(int a, std::vector<int> subset);  // 1xD
  int concat_cols(const std::vector<int>& parts);
  int sum_all(int a);  // 1x1

  // logsumexp(logits) - logits[target], stabilised. logits is 1xN.
  int cross_entropy(int logits, int target);

  // Two-direction in-batch InfoNCE on an MxM similarity matrix whose
  // diagonal holds the positive pairs; mean over the M anchors of
  // (row-wise CE + column-wise CE).
  int info_nce(int z);

  // Inverted dropout with a mask drawn from `seed`; identity when
  // training is false or rate == 0.
  int dropout(int a, double rate, std::uint64_t seed, bool training);

  // Full-table propagation through a normalized signed graph. When
  // `cached` is given its value is used as the forward result (per-epoch
  // mode); the backward pass always applies the exact linear adjoint.
  int propagate_table(int e0, const SignedGraph& graph, int k, LayerMeanRule rule,
                      const Mat* cached = nullptr);

  const Mat& value(int id) const { return nodes_[id].value; }
  int rows(int id) const { return static_cast<int>(nodes_[id].value.rows()); }
  int cols(int id) const { return static_cast<int>(nodes_[id].value.cols()); }

  // Seeds d(root)/d(root) = 1 and walks the tape backwards. root must be 1x1.
  void backward(int root);

  bool has_grad(int id) const;
  const Mat& grad(int id) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    std::function<void(Tape&)> pull;  // empty for leaves
  };

  int push(Mat value, std::function<void(Tape&)> pull);
  Mat& grad_slot(int id);

  std::vector<Node> nodes_;
  std::vector<Mat> grads_;
  std::vector<char> grad_set_;
};

}  // namespace t2::ad
