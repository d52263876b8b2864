#pragma once

#include <Eigen/Dense>
#include <vector>

#include "t2/autodiff.hpp"

namespace t2 {

struct LossWeights {
  double mu1 = 0.5;   // alignment
  double mu2 = 0.5;   // contrast
  double tau = 0.1;   // InfoNCE temperature, > 0
  double alpha = 1.0; // triplet margin
};

struct PooledVector {
  Eigen::RowVectorXd value;
  bool absent = false;
};

// Arithmetic mean of the selected rows; empty subset -> zero vector
// flagged absent.
PooledVector mean_pool(const Mat& e, const std::vector<int>& subset);

// Per-user pooled views feeding the alignment loss. Users with an absent
// side are skipped for that domain.
struct PooledViews {
  PooledVector a_single, b_single;  // e'_A, e'_B
  PooledVector a_cross, b_cross;    // e''_A, e''_B
};

// Symmetric two-direction in-batch InfoNCE, mean over users, domains
// summed. A domain with fewer than two usable users contributes 0 and
// bumps the warning counter when one is supplied.
double alignment_loss(const std::vector<PooledViews>& batch, double tau,
                      long* skipped_domains = nullptr);

// In-sequence triplet loss against the positive / negative centroids.
// Returns 0 when either index set is empty.
double feedback_contrast_loss(const Mat& e, const std::vector<int>& pos_idx,
                              const std::vector<int>& neg_idx, double alpha);

// -log softmax(rep * w + b)[target], max-stabilised. w is d x |catalog|.
double recommendation_loss(const Eigen::RowVectorXd& rep, const Mat& w, const Mat& b, int target);

// Eq-style weighted combination of the six components.
double total_loss(double single_a, double single_b, double cross_a, double cross_b, double align,
                  double cont, const LossWeights& weights);

// ---- tape builders used by the trainer ---------------------------------

// pooled node ids; -1 marks an absent side.
struct PooledViewNodes {
  int a_single = -1, b_single = -1, a_cross = -1, b_cross = -1;
};

int alignment_loss_node(ad::Tape& tape, const std::vector<PooledViewNodes>& batch, double tau);

int feedback_contrast_node(ad::Tape& tape, int e, const std::vector<int>& pos_idx,
                           const std::vector<int>& neg_idx, double alpha);

}  // namespace t2
