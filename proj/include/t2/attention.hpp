#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "t2/autodiff.hpp"
#include "t2/masks.hpp"

namespace t2 {

enum class MaskMode { Additive, Hadamard };
enum class BlockScope { Cross, Single };

// Head schedule overrides for the ablation runs.
enum class CrossSchedule { Full, OnlyM1, OnlyM2, OnlyM3, OnlyM4 };
enum class SingleSchedule { Alternate, OnlyMf, OnlyMfNeg };

// One attention block: per-head Q/K/V projections to d/N_H columns, output
// projection, then a two-layer FFN with 4d inner width. Residual around
// both halves, no layer norm.
struct AttentionParams {
  int d = 0;
  int n_heads = 0;
  std::vector<Mat> wq, wk, wv;  // each d x (d / n_heads)
  Mat wo;                       // d x d
  Mat ffn_w1;                   // d x 4d
  Mat ffn_b1;                   // 1 x 4d
  Mat ffn_w2;                   // 4d x d
  Mat ffn_b2;                   // 1 x d

  int head_dim() const { return d / n_heads; }
};

struct BlockOptions {
  MaskMode mode = MaskMode::Additive;
  bool causal = true;
  double dropout = 0.0;
  bool training = false;
  std::uint64_t dropout_seed = 0;
  CrossSchedule cross_schedule = CrossSchedule::Full;
  SingleSchedule single_schedule = SingleSchedule::Alternate;
};

// Mask for head `i` under the scope's schedule, before the causal part.
const BoolGrid& schedule_mask(const MaskSet& masks, BlockScope scope, int head,
                              CrossSchedule cross_schedule, SingleSchedule single_schedule,
                              BoolGrid& scratch);

// Single attention head on the tape. Returns the context node (L x d_head)
// and, via weights_out, the attention probability node (L x L).
int attend_head(ad::Tape& tape, int e_hat, const BoolGrid& allowed, int wq, int wk, int wv,
                MaskMode mode, int* weights_out = nullptr);

// As above with an optional causal restriction. In hadamard mode the
// transition mask zeroes logits while causality removes positions from
// the softmax domain.
int attend_head_causal(ad::Tape& tape, int e_hat, const BoolGrid& allowed, const BoolGrid* causal,
                       int wq, int wk, int wv, MaskMode mode, int* weights_out = nullptr);

// Tape leaf ids of one block's parameters, shared across a batch.
struct BlockLeaves {
  int n_heads = 0;
  std::vector<int> wq, wk, wv;
  int wo = -1, ffn_w1 = -1, ffn_b1 = -1, ffn_w2 = -1, ffn_b2 = -1;
};

BlockLeaves make_block_leaves(ad::Tape& tape, const AttentionParams& params);

// Full block on the tape: e_hat (already positional-added) -> L x d.
int apply_block(ad::Tape& tape, int e_hat, const MaskSet& masks, BlockScope scope,
                const BlockLeaves& leaves, const BlockOptions& options,
                std::vector<int>* attn_weight_nodes = nullptr);

// ---- plain (tape-free) wrappers for the value-level contracts ----------

struct HeadResult {
  Mat output;   // L x d_head
  Mat weights;  // L x L attention probabilities
};

HeadResult masked_attention(const Mat& e_hat, const BoolGrid& mask, const Mat& wq, const Mat& wk,
                            const Mat& wv, MaskMode mode);

// positions[i] is the positional-table row index of sequence position i.
Mat cross_transition_block_value(const Mat& e_graph, const Mat& positional,
                                 const std::vector<int>& positions, const MaskSet& masks,
                                 BlockScope scope, const AttentionParams& params,
                                 const BlockOptions& options);

}  // namespace t2
