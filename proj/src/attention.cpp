#include "t2/attention.hpp"

#include <cmath>

#include "t2/util.hpp"

namespace t2 {

const BoolGrid& schedule_mask(const MaskSet& masks, BlockScope scope, int head,
                              CrossSchedule cross_schedule, SingleSchedule single_schedule,
                              BoolGrid& scratch) {
  if (scope == BlockScope::Cross) {
    switch (cross_schedule) {
      case CrossSchedule::OnlyM1: return masks.cross.m1;
      case CrossSchedule::OnlyM2: return masks.cross.m2;
      case CrossSchedule::OnlyM3: return masks.cross.m3;
      case CrossSchedule::OnlyM4: return masks.cross.m4;
      case CrossSchedule::Full: break;
    }
    switch (head % 4) {
      case 0: return masks.cross.m1;
      case 1: return masks.cross.m2;
      case 2: return masks.cross.m3;
      default: return masks.cross.m4;
    }
  }
  switch (single_schedule) {
    case SingleSchedule::OnlyMf: return masks.mf;
    case SingleSchedule::OnlyMfNeg:
      scratch = !masks.mf;
      return scratch;
    case SingleSchedule::Alternate: break;
  }
  if (head % 2 == 0) return masks.mf;
  scratch = !masks.mf;
  return scratch;
}

int attend_head(ad::Tape& tape, int e_hat, const BoolGrid& allowed, int wq, int wk, int wv,
                MaskMode mode, int* weights_out) {
  return attend_head_causal(tape, e_hat, allowed, nullptr, wq, wk, wv, mode, weights_out);
}

int attend_head_causal(ad::Tape& tape, int e_hat, const BoolGrid& allowed, const BoolGrid* causal,
                       int wq, int wk, int wv, MaskMode mode, int* weights_out) {
  const int d_head = tape.cols(wq);
  int q = tape.matmul(e_hat, wq);
  int k = tape.matmul(e_hat, wk);
  int v = tape.matmul(e_hat, wv);
  int scores = tape.scale(tape.matmul(q, tape.transpose(k)), 1.0 / std::sqrt(d_head));
  int probs;
  if (mode == MaskMode::Additive) {
    BoolGrid effective = causal ? BoolGrid(allowed && *causal) : allowed;
    probs = tape.softmax_rows_masked(scores, effective);
  } else {
    // literal form: zero the excluded logits; the causal restriction still
    // removes future positions from the softmax domain entirely
    int zeroed = tape.mask01(scores, allowed);
    probs = causal ? tape.softmax_rows_masked(zeroed, *causal) : tape.softmax_rows(zeroed);
  }
  if (weights_out) *weights_out = probs;
  return tape.matmul(probs, v);
}

BlockLeaves make_block_leaves(ad::Tape& tape, const AttentionParams& params) {
  BlockLeaves leaves;
  leaves.n_heads = params.n_heads;
  for (int h = 0; h < params.n_heads; ++h) {
    leaves.wq.push_back(tape.leaf(params.wq[h]));
    leaves.wk.push_back(tape.leaf(params.wk[h]));
    leaves.wv.push_back(tape.leaf(params.wv[h]));
  }
  leaves.wo = tape.leaf(params.wo);
  leaves.ffn_w1 = tape.leaf(params.ffn_w1);
  leaves.ffn_b1 = tape.leaf(params.ffn_b1);
  leaves.ffn_w2 = tape.leaf(params.ffn_w2);
  leaves.ffn_b2 = tape.leaf(params.ffn_b2);
  return leaves;
}

int apply_block(ad::Tape& tape, int e_hat, const MaskSet& masks, BlockScope scope,
                const BlockLeaves& leaves, const BlockOptions& options,
                std::vector<int>* attn_weight_nodes) {
  if (scope == BlockScope::Cross && leaves.n_heads % 4 != 0) {
    throw InternalError("cross-scope block needs a head count divisible by 4");
  }
  if (scope == BlockScope::Single && leaves.n_heads % 2 != 0) {
    throw InternalError("single-scope block needs an even head count");
  }
  const int length = tape.rows(e_hat);
  BoolGrid causal;
  if (options.causal) causal = lower_triangular(length);

  BoolGrid scratch;
  std::vector<int> heads(leaves.n_heads);
  for (int h = 0; h < leaves.n_heads; ++h) {
    const BoolGrid& base =
        schedule_mask(masks, scope, h, options.cross_schedule, options.single_schedule, scratch);
    int weights = -1;
    heads[h] = attend_head_causal(tape, e_hat, base, options.causal ? &causal : nullptr,
                                  leaves.wq[h], leaves.wk[h], leaves.wv[h], options.mode,
                                  attn_weight_nodes ? &weights : nullptr);
    if (attn_weight_nodes) attn_weight_nodes->push_back(weights);
  }

  int projected = tape.matmul(tape.concat_cols(heads), leaves.wo);
  projected = tape.dropout(projected, options.dropout, mix_seed(options.dropout_seed, 0x41),
                           options.training);
  int h1 = tape.add(e_hat, projected);

  int inner = tape.relu(tape.add_row(tape.matmul(h1, leaves.ffn_w1), leaves.ffn_b1));
  int ffn = tape.add_row(tape.matmul(inner, leaves.ffn_w2), leaves.ffn_b2);
  ffn = tape.dropout(ffn, options.dropout, mix_seed(options.dropout_seed, 0x42), options.training);
  return tape.add(h1, ffn);
}

HeadResult masked_attention(const Mat& e_hat, const BoolGrid& mask, const Mat& wq, const Mat& wk,
                            const Mat& wv, MaskMode mode) {
  if (!e_hat.allFinite()) throw InternalError("masked_attention: non-finite input");
  ad::Tape tape;
  int e = tape.leaf(e_hat);
  int weights = -1;
  int out = attend_head(tape, e, mask, tape.leaf(wq), tape.leaf(wk), tape.leaf(wv), mode,
                        &weights);
  return {tape.value(out), tape.value(weights)};
}

Mat cross_transition_block_value(const Mat& e_graph, const Mat& positional,
                                 const std::vector<int>& positions, const MaskSet& masks,
                                 BlockScope scope, const AttentionParams& params,
                                 const BlockOptions& options) {
  if (static_cast<Eigen::Index>(positions.size()) != e_graph.rows()) {
    throw InternalError("cross_transition_block: one position index per sequence row required");
  }
  for (int p : positions) {
    if (p < 0 || p >= positional.rows()) {
      throw InternalError("sequence position " + std::to_string(p) +
                          " exceeds positional table length " +
                          std::to_string(positional.rows()));
    }
  }
  ad::Tape tape;
  int pos_table = tape.leaf(positional);
  int e_hat = tape.add(tape.leaf(e_graph), tape.gather_rows(pos_table, positions));
  int out = apply_block(tape, e_hat, masks, scope, make_block_leaves(tape, params), options);
  return tape.value(out);
}

}  // namespace t2
