#include "t2/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "t2/util.hpp"

namespace t2 {

void TrainConfig::validate() const {
  if (d <= 0 || n_heads <= 0) throw InternalError("config: d and n_heads must be positive");
  if (d % n_heads != 0) throw InternalError("config: d must be divisible by n_heads");
  if (n_heads % 4 != 0) throw InternalError("config: n_heads must be divisible by 4");
  if (tau <= 0) throw InternalError("config: tau must be positive");
  if (max_len < 1) throw InternalError("config: max_len must be at least 1");
  if (graph_layers < 0) throw InternalError("config: graph layers must be non-negative");
  if (dropout < 0 || dropout >= 1) throw InternalError("config: dropout must be in [0, 1)");
  if (batch_size < 1) throw InternalError("config: batch size must be positive");
}

namespace {

void visit_block(const std::string& prefix, AttentionParams& block,
                 const std::function<void(const std::string&, Mat&)>& fn) {
  for (int h = 0; h < block.n_heads; ++h) fn(prefix + ".wq" + std::to_string(h), block.wq[h]);
  for (int h = 0; h < block.n_heads; ++h) fn(prefix + ".wk" + std::to_string(h), block.wk[h]);
  for (int h = 0; h < block.n_heads; ++h) fn(prefix + ".wv" + std::to_string(h), block.wv[h]);
  fn(prefix + ".wo", block.wo);
  fn(prefix + ".ffn_w1", block.ffn_w1);
  fn(prefix + ".ffn_b1", block.ffn_b1);
  fn(prefix + ".ffn_w2", block.ffn_w2);
  fn(prefix + ".ffn_b2", block.ffn_b2);
}

}  // namespace

void ModelParams::visit(const std::function<void(const std::string&, Mat&)>& fn) {
  fn("e0_a", e0_a);
  fn("e0_b", e0_b);
  fn("e0_c", e0_c);
  fn("pos_a", pos_a);
  fn("pos_b", pos_b);
  fn("pos_c", pos_c);
  visit_block("block_a", block_a, fn);
  visit_block("block_b", block_b, fn);
  visit_block("block_c", block_c, fn);
  fn("head_a.w", head_a_w);
  fn("head_a.b", head_a_b);
  fn("head_b.w", head_b_w);
  fn("head_b.b", head_b_b);
}

void ModelParams::visit(const std::function<void(const std::string&, const Mat&)>& fn) const {
  const_cast<ModelParams*>(this)->visit(
      [&fn](const std::string& name, Mat& m) { fn(name, m); });
}

namespace {

bool is_bias(const std::string& name) {
  return name.ends_with(".b") || name.ends_with("_b1") || name.ends_with("_b2");
}

AttentionParams make_block(int d, int n_heads) {
  AttentionParams block;
  block.d = d;
  block.n_heads = n_heads;
  const int dh = d / n_heads;
  for (int h = 0; h < n_heads; ++h) {
    block.wq.emplace_back(Mat::Zero(d, dh));
    block.wk.emplace_back(Mat::Zero(d, dh));
    block.wv.emplace_back(Mat::Zero(d, dh));
  }
  block.wo = Mat::Zero(d, d);
  block.ffn_w1 = Mat::Zero(d, 4 * d);
  block.ffn_b1 = Mat::Zero(1, 4 * d);
  block.ffn_w2 = Mat::Zero(4 * d, d);
  block.ffn_b2 = Mat::Zero(1, d);
  return block;
}

}  // namespace

ModelParams init_params(const TrainConfig& config, int items_a, int items_b, std::uint64_t seed) {
  config.validate();
  if (items_a <= 0 || items_b <= 0) {
    throw InternalError("init_params: both domains need at least one item");
  }
  ModelParams p;
  const int d = config.d;
  p.e0_a = Mat::Zero(items_a, d);
  p.e0_b = Mat::Zero(items_b, d);
  p.e0_c = Mat::Zero(items_a + items_b, d);
  p.pos_a = Mat::Zero(config.max_len, d);
  p.pos_b = Mat::Zero(config.max_len, d);
  p.pos_c = Mat::Zero(config.max_len, d);
  p.block_a = make_block(d, config.n_heads);
  p.block_b = make_block(d, config.n_heads);
  p.block_c = make_block(d, config.n_heads);
  p.head_a_w = Mat::Zero(d, items_a);
  p.head_a_b = Mat::Zero(1, items_a);
  p.head_b_w = Mat::Zero(d, items_b);
  p.head_b_b = Mat::Zero(1, items_b);

  std::mt19937_64 rng(splitmix64(seed));
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
  p.visit([&](const std::string& name, Mat& m) {
    if (is_bias(name)) return;  // biases start at zero
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = dist(rng);
  });
  return p;
}

TransitionGraphs build_graphs(const DatasetSplit& split) {
  TransitionGraphs graphs;
  graphs.a = build_transition_matrix(split.train, GraphKind::A, split.items_a, split.items_b);
  graphs.b = build_transition_matrix(split.train, GraphKind::B, split.items_a, split.items_b);
  graphs.c = build_transition_matrix(split.train, GraphKind::C, split.items_a, split.items_b);
  return graphs;
}

PropagatedTables propagate_tables(const ModelParams& params, const TransitionGraphs& graphs,
                                  const TrainConfig& config) {
  PropagatedTables t;
  t.a = propagate(graphs.a, params.e0_a, config.graph_layers, config.mean_rule);
  t.b = propagate(graphs.b, params.e0_b, config.graph_layers, config.mean_rule);
  t.c = propagate(graphs.c, params.e0_c, config.graph_layers, config.mean_rule);
  return t;
}

namespace {

// Window of the most recent max_len events.
struct TruncatedSeq {
  std::vector<int> c_items;       // table row ids (C table)
  std::vector<Domain> c_domains;
  std::vector<int> c_feedbacks;
  std::vector<int> c_targets;     // dense ids local to each event's domain
  std::vector<int> a_items, b_items;
  std::vector<int> a_feedbacks, b_feedbacks;
  std::vector<int> a_pos, b_pos;  // per single-domain event, its seq_c position
  int eval_start = 1;
};

TruncatedSeq truncate_entry(const SplitEntry& entry, int items_a, int max_len) {
  const auto& seq = entry.history.seq_c;
  int n = static_cast<int>(seq.size());
  int start = std::max(0, n - max_len);
  TruncatedSeq t;
  t.eval_start = std::max(1, entry.eval_start - start);
  for (int i = start; i < n; ++i) {
    const auto& ev = seq[i];
    int pos = i - start;
    t.c_items.push_back(ev.domain == Domain::A ? ev.item_id : items_a + ev.item_id);
    t.c_domains.push_back(ev.domain);
    t.c_feedbacks.push_back(ev.feedback);
    t.c_targets.push_back(ev.item_id);
    if (ev.domain == Domain::A) {
      t.a_items.push_back(ev.item_id);
      t.a_feedbacks.push_back(ev.feedback);
      t.a_pos.push_back(pos);
    } else {
      t.b_items.push_back(ev.item_id);
      t.b_feedbacks.push_back(ev.feedback);
      t.b_pos.push_back(pos);
    }
  }
  return t;
}

std::vector<int> iota_positions(int n) {
  std::vector<int> v(n);
  for (int i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace

BatchForward forward_batch(ad::Tape& tape, ModelParams& params, const TransitionGraphs& graphs,
                           const std::vector<const SplitEntry*>& batch, const TrainConfig& config,
                           bool training, std::uint64_t step_seed, ParamLeaves& leaves,
                           const PropagatedTables* tables) {
  leaves = ParamLeaves{};
  params.visit([&](const std::string& name, Mat& m) {
    leaves.names.push_back(name);
    leaves.ids.push_back(tape.leaf(m));
    leaves.slots.push_back(&m);
  });
  auto leaf_of = [&](const std::string& name) {
    for (std::size_t i = 0; i < leaves.names.size(); ++i)
      if (leaves.names[i] == name) return leaves.ids[i];
    throw InternalError("unknown parameter leaf " + name);
  };

  const bool step_mode = config.propagate_mode == PropagateMode::Step || tables == nullptr;
  int table_a = tape.propagate_table(leaf_of("e0_a"), graphs.a, config.graph_layers,
                                     config.mean_rule, step_mode ? nullptr : &tables->a);
  int table_b = tape.propagate_table(leaf_of("e0_b"), graphs.b, config.graph_layers,
                                     config.mean_rule, step_mode ? nullptr : &tables->b);
  int table_c = tape.propagate_table(leaf_of("e0_c"), graphs.c, config.graph_layers,
                                     config.mean_rule, step_mode ? nullptr : &tables->c);
  int pos_a = leaf_of("pos_a");
  int pos_b = leaf_of("pos_b");
  int pos_c = leaf_of("pos_c");

  BlockLeaves block_a, block_b, block_c;
  {
    // the visit order above registered every block tensor; rebuild the
    // leaf handles in the same order
    auto fill = [&](const std::string& prefix, const AttentionParams& ap) {
      BlockLeaves bl;
      bl.n_heads = ap.n_heads;
      for (int h = 0; h < ap.n_heads; ++h) bl.wq.push_back(leaf_of(prefix + ".wq" + std::to_string(h)));
      for (int h = 0; h < ap.n_heads; ++h) bl.wk.push_back(leaf_of(prefix + ".wk" + std::to_string(h)));
      for (int h = 0; h < ap.n_heads; ++h) bl.wv.push_back(leaf_of(prefix + ".wv" + std::to_string(h)));
      bl.wo = leaf_of(prefix + ".wo");
      bl.ffn_w1 = leaf_of(prefix + ".ffn_w1");
      bl.ffn_b1 = leaf_of(prefix + ".ffn_b1");
      bl.ffn_w2 = leaf_of(prefix + ".ffn_w2");
      bl.ffn_b2 = leaf_of(prefix + ".ffn_b2");
      return bl;
    };
    block_a = fill("block_a", params.block_a);
    block_b = fill("block_b", params.block_b);
    block_c = fill("block_c", params.block_c);
  }

  BatchForward fwd;
  for (std::size_t u = 0; u < batch.size(); ++u) {
    const SplitEntry& entry = *batch[u];
    TruncatedSeq seq = truncate_entry(entry, params.items_a(), config.max_len);
    const int length = static_cast<int>(seq.c_items.size());
    if (length == 0) continue;

    EncodedUser enc;
    enc.c_items = seq.c_items;
    enc.c_domains = seq.c_domains;
    enc.c_feedbacks = seq.c_feedbacks;
    enc.a_items = seq.a_items;
    enc.b_items = seq.b_items;
    enc.a_feedbacks = seq.a_feedbacks;
    enc.b_feedbacks = seq.b_feedbacks;
    enc.a_pos_in_c = seq.a_pos;
    enc.b_pos_in_c = seq.b_pos;

    BlockOptions options;
    options.mode = config.mask_mode;
    options.causal = config.causal;
    options.dropout = config.dropout;
    options.training = training;
    options.cross_schedule = config.cross_schedule;
    options.single_schedule = config.single_schedule;

    // cross-domain encoder
    {
      MaskSet masks = build_mask_set(seq.c_domains, seq.c_feedbacks);
      int e_hat = tape.add(tape.gather_rows(table_c, seq.c_items),
                           tape.gather_rows(pos_c, iota_positions(length)));
      options.dropout_seed = mix_seed(step_seed, u, 0xC);
      enc.ec = apply_block(tape, e_hat, masks, BlockScope::Cross, block_c, options);
    }
    // single-domain encoders
    if (!seq.a_items.empty()) {
      std::vector<Domain> doms(seq.a_items.size(), Domain::A);
      MaskSet masks = build_mask_set(doms, seq.a_feedbacks);
      int e_hat = tape.add(
          tape.gather_rows(table_a, seq.a_items),
          tape.gather_rows(pos_a, iota_positions(static_cast<int>(seq.a_items.size()))));
      options.dropout_seed = mix_seed(step_seed, u, 0xA);
      enc.ea = apply_block(tape, e_hat, masks, BlockScope::Single, block_a, options);
    }
    if (!seq.b_items.empty()) {
      std::vector<Domain> doms(seq.b_items.size(), Domain::B);
      MaskSet masks = build_mask_set(doms, seq.b_feedbacks);
      int e_hat = tape.add(
          tape.gather_rows(table_b, seq.b_items),
          tape.gather_rows(pos_b, iota_positions(static_cast<int>(seq.b_items.size()))));
      options.dropout_seed = mix_seed(step_seed, u, 0xB);
      enc.eb = apply_block(tape, e_hat, masks, BlockScope::Single, block_b, options);
    }

    // pooled views for the alignment loss
    PooledViewNodes pooled;
    if (enc.ea >= 0) {
      pooled.a_single = tape.mean_rows(enc.ea, iota_positions(static_cast<int>(seq.a_items.size())));
    }
    if (enc.eb >= 0) {
      pooled.b_single = tape.mean_rows(enc.eb, iota_positions(static_cast<int>(seq.b_items.size())));
    }
    if (!seq.a_pos.empty()) pooled.a_cross = tape.mean_rows(enc.ec, seq.a_pos);
    if (!seq.b_pos.empty()) pooled.b_cross = tape.mean_rows(enc.ec, seq.b_pos);

    // next-item events over the truncated window
    for (int t = std::max(1, seq.eval_start); t < length; ++t) {
      Event ev;
      ev.user = static_cast<int>(fwd.users.size());
      ev.pos = t;
      ev.domain = seq.c_domains[t];
      ev.target = seq.c_targets[t];
      fwd.events.push_back(ev);
    }

    fwd.users.push_back(std::move(enc));
    fwd.pooled.push_back(pooled);
  }
  return fwd;
}

namespace {

int sequence_rep(ad::Tape& tape, int encoding, int upto, PredPool pool) {
  // representation of the strict prefix [0, upto)
  if (pool == PredPool::Last) return tape.gather_rows(encoding, {upto - 1});
  return tape.mean_rows(encoding, iota_positions(upto));
}

}  // namespace

LossNodes build_losses(ad::Tape& tape, const BatchForward& fwd, const ParamLeaves& leaves,
                       const TrainConfig& config) {
  auto leaf_of = [&](const std::string& name) {
    for (std::size_t i = 0; i < leaves.names.size(); ++i)
      if (leaves.names[i] == name) return leaves.ids[i];
    throw InternalError("unknown parameter leaf " + name);
  };
  const int head_a_w = leaf_of("head_a.w");
  const int head_a_b = leaf_of("head_a.b");
  const int head_b_w = leaf_of("head_b.w");
  const int head_b_b = leaf_of("head_b.b");

  LossNodes nodes;
  int zero = tape.leaf(Mat::Zero(1, 1));
  int sum_single_a = -1, sum_single_b = -1, sum_cross_a = -1, sum_cross_b = -1;
  auto accumulate = [&](int& slot, int term) { slot = slot < 0 ? term : tape.add(slot, term); };

  for (const Event& ev : fwd.events) {
    const EncodedUser& user = fwd.users[ev.user];
    const bool is_a = ev.domain == Domain::A;
    int head_w = is_a ? head_a_w : head_b_w;
    int head_b = is_a ? head_a_b : head_b_b;

    int cross_rep = sequence_rep(tape, user.ec, ev.pos, config.pred_pool);
    int cross_logits = tape.add(tape.matmul(cross_rep, head_w), head_b);
    int cross_ce = tape.cross_entropy(cross_logits, ev.target);

    // single-domain prefix: events of the target's domain before position t
    const auto& pos_in_c = is_a ? user.a_pos_in_c : user.b_pos_in_c;
    int prefix = static_cast<int>(
        std::lower_bound(pos_in_c.begin(), pos_in_c.end(), ev.pos) - pos_in_c.begin());
    int single_rep = cross_rep;  // empty single-domain prefix adds nothing
    if (prefix >= 1) {
      int enc = is_a ? user.ea : user.eb;
      single_rep = tape.add(cross_rep, sequence_rep(tape, enc, prefix, config.pred_pool));
    }
    int single_logits = tape.add(tape.matmul(single_rep, head_w), head_b);
    int single_ce = tape.cross_entropy(single_logits, ev.target);

    accumulate(is_a ? sum_cross_a : sum_cross_b, cross_ce);
    accumulate(is_a ? sum_single_a : sum_single_b, single_ce);
  }

  const double inv_events = fwd.events.empty() ? 0.0 : 1.0 / static_cast<double>(fwd.events.size());
  nodes.single_a = sum_single_a < 0 ? zero : tape.scale(sum_single_a, inv_events);
  nodes.single_b = sum_single_b < 0 ? zero : tape.scale(sum_single_b, inv_events);
  nodes.cross_a = sum_cross_a < 0 ? zero : tape.scale(sum_cross_a, inv_events);
  nodes.cross_b = sum_cross_b < 0 ? zero : tape.scale(sum_cross_b, inv_events);

  nodes.align = alignment_loss_node(tape, fwd.pooled, config.tau);

  int cont_sum = -1;
  for (const EncodedUser& user : fwd.users) {
    auto split_by_feedback = [](const std::vector<int>& feedbacks) {
      std::pair<std::vector<int>, std::vector<int>> out;
      for (std::size_t i = 0; i < feedbacks.size(); ++i) {
        (feedbacks[i] > 0 ? out.first : out.second).push_back(static_cast<int>(i));
      }
      return out;
    };
    auto [cp, cn] = split_by_feedback(user.c_feedbacks);
    int user_cont = feedback_contrast_node(tape, user.ec, cp, cn, config.alpha);
    if (user.ea >= 0) {
      auto [ap, an] = split_by_feedback(user.a_feedbacks);
      user_cont = tape.add(user_cont, feedback_contrast_node(tape, user.ea, ap, an, config.alpha));
    }
    if (user.eb >= 0) {
      auto [bp, bn] = split_by_feedback(user.b_feedbacks);
      user_cont = tape.add(user_cont, feedback_contrast_node(tape, user.eb, bp, bn, config.alpha));
    }
    accumulate(cont_sum, user_cont);
  }
  nodes.cont = cont_sum < 0 ? zero
                            : tape.scale(cont_sum, fwd.users.empty()
                                                       ? 0.0
                                                       : 1.0 / static_cast<double>(fwd.users.size()));

  int total = tape.add(tape.add(nodes.single_a, nodes.single_b),
                       tape.add(nodes.cross_a, nodes.cross_b));
  total = tape.add(total, tape.scale(nodes.align, config.mu1));
  total = tape.add(total, tape.scale(nodes.cont, config.mu2));
  nodes.total = total;
  return nodes;
}

AdamState init_adam(const ModelParams& params) {
  AdamState state;
  params.visit([&](const std::string&, const Mat& m) {
    state.m.emplace_back(Mat::Zero(m.rows(), m.cols()));
    state.v.emplace_back(Mat::Zero(m.rows(), m.cols()));
  });
  return state;
}

LossRecord train_step(ModelParams& params, const std::vector<const SplitEntry*>& batch,
                      const TransitionGraphs& graphs, const TrainConfig& config, AdamState& adam,
                      const PropagatedTables* tables, std::uint64_t step_seed) {
  ad::Tape tape;
  ParamLeaves leaves;
  BatchForward fwd =
      forward_batch(tape, params, graphs, batch, config, /*training=*/true, step_seed, leaves,
                    tables);
  LossNodes nodes = build_losses(tape, fwd, leaves, config);

  LossRecord record;
  record.single_a = tape.value(nodes.single_a)(0, 0);
  record.single_b = tape.value(nodes.single_b)(0, 0);
  record.cross_a = tape.value(nodes.cross_a)(0, 0);
  record.cross_b = tape.value(nodes.cross_b)(0, 0);
  record.align = tape.value(nodes.align)(0, 0);
  record.cont = tape.value(nodes.cont)(0, 0);
  record.total = tape.value(nodes.total)(0, 0);
  if (!std::isfinite(record.total)) {
    std::ostringstream msg;
    msg << "non-finite training loss: single_a=" << record.single_a
        << " single_b=" << record.single_b << " cross_a=" << record.cross_a
        << " cross_b=" << record.cross_b << " align=" << record.align
        << " cont=" << record.cont;
    throw InternalError(msg.str());
  }

  tape.backward(nodes.total);

  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ++adam.step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(adam.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(adam.step));
  for (std::size_t i = 0; i < leaves.ids.size(); ++i) {
    Mat& theta = *leaves.slots[i];
    Mat g = tape.has_grad(leaves.ids[i]) ? tape.grad(leaves.ids[i])
                                         : Mat::Zero(theta.rows(), theta.cols());
    if (config.l2 != 0.0) g += 2.0 * config.l2 * theta;
    adam.m[i] = beta1 * adam.m[i] + (1.0 - beta1) * g;
    adam.v[i] = beta2 * adam.v[i] + (1.0 - beta2) * g.cwiseProduct(g);
    Mat m_hat = adam.m[i] / bc1;
    Mat v_hat = adam.v[i] / bc2;
    theta -= config.learning_rate *
             m_hat.cwiseQuotient(v_hat.cwiseSqrt() + Mat::Constant(theta.rows(), theta.cols(), eps));
    if (!theta.allFinite()) {
      throw InternalError("parameter " + leaves.names[i] + " became non-finite after update");
    }
  }
  return record;
}

GradCheckReport gradient_check(ModelParams& params, const std::vector<const SplitEntry*>& batch,
                               const TransitionGraphs& graphs, const TrainConfig& config,
                               int coords_per_group, std::uint64_t coord_seed) {
  TrainConfig cfg = config;
  cfg.dropout = 0.0;  // the harness differentiates the deterministic path
  cfg.propagate_mode = PropagateMode::Step;

  auto loss_value = [&]() {
    ad::Tape tape;
    ParamLeaves leaves;
    BatchForward fwd =
        forward_batch(tape, params, graphs, batch, cfg, /*training=*/false, 0, leaves, nullptr);
    LossNodes nodes = build_losses(tape, fwd, leaves, cfg);
    return tape.value(nodes.total)(0, 0);
  };

  // analytic gradients
  std::vector<Mat> analytic;
  std::vector<std::string> names;
  {
    ad::Tape tape;
    ParamLeaves leaves;
    BatchForward fwd =
        forward_batch(tape, params, graphs, batch, cfg, /*training=*/false, 0, leaves, nullptr);
    LossNodes nodes = build_losses(tape, fwd, leaves, cfg);
    tape.backward(nodes.total);
    for (std::size_t i = 0; i < leaves.ids.size(); ++i) {
      names.push_back(leaves.names[i]);
      analytic.push_back(tape.has_grad(leaves.ids[i])
                             ? tape.grad(leaves.ids[i])
                             : Mat::Zero(leaves.slots[i]->rows(), leaves.slots[i]->cols()));
    }
  }

  GradCheckReport report;
  const double h = 1e-5;
  std::mt19937_64 rng(splitmix64(coord_seed));
  std::size_t group_index = 0;
  params.visit([&](const std::string& name, Mat& m) {
    GradCheckGroup group;
    group.name = name;
    const auto total = static_cast<std::size_t>(m.size());
    std::vector<std::size_t> coords;
    if (total <= static_cast<std::size_t>(coords_per_group)) {
      for (std::size_t c = 0; c < total; ++c) coords.push_back(c);
    } else {
      for (int c = 0; c < coords_per_group; ++c) coords.push_back(rng() % total);
    }
    for (std::size_t c : coords) {
      double* slot = m.data() + c;
      double saved = *slot;
      auto central = [&](double step) {
        *slot = saved + step;
        double up = loss_value();
        *slot = saved - step;
        double down = loss_value();
        *slot = saved;
        return (up - down) / (2.0 * step);
      };
      double fd = central(h);
      double fd_half = central(h / 2.0);
      // a ReLU or hinge kink inside the stencil makes the central
      // difference meaningless; such coordinates are skipped and counted
      if (std::abs(fd - fd_half) > 1e-3 * std::max(1.0, std::abs(fd))) {
        ++group.coords_kinked;
        continue;
      }
      double an = analytic[group_index].data()[c];
      double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
      group.max_rel_error = std::max(group.max_rel_error, rel);
      ++group.coords_checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, group.max_rel_error);
    report.groups.push_back(std::move(group));
    ++group_index;
  });
  return report;
}

}  // namespace t2
