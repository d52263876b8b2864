#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "t2/attention.hpp"
#include "t2/data.hpp"
#include "t2/graph.hpp"
#include "t2/objectives.hpp"

namespace t2 {

enum class PropagateMode { Epoch, Step };
enum class PredPool { Last, Mean };

struct TrainConfig {
  int d = 256;
  int batch_size = 256;
  int epochs = 100;
  double learning_rate = 1e-3;
  double l2 = 1e-4;
  double dropout = 0.2;
  int graph_layers = 1;  // K
  int n_heads = 8;
  int max_len = 200;
  double mu1 = 0.5;
  double mu2 = 0.5;
  double tau = 0.1;
  double alpha = 1.0;
  std::uint64_t seed = 42;
  MaskMode mask_mode = MaskMode::Additive;
  LayerMeanRule mean_rule = LayerMeanRule::KPlus1;
  bool causal = true;
  PropagateMode propagate_mode = PropagateMode::Epoch;
  PredPool pred_pool = PredPool::Last;
  CrossSchedule cross_schedule = CrossSchedule::Full;
  SingleSchedule single_schedule = SingleSchedule::Alternate;

  LossWeights loss_weights() const { return {mu1, mu2, tau, alpha}; }
  void validate() const;  // throws InternalError on an inconsistent config
};

struct ModelParams {
  Mat e0_a, e0_b, e0_c;
  Mat pos_a, pos_b, pos_c;  // max_len x d
  AttentionParams block_a, block_b, block_c;
  Mat head_a_w, head_a_b;  // d x |A|, 1 x |A|
  Mat head_b_w, head_b_b;

  int d() const { return static_cast<int>(e0_a.cols()); }
  int items_a() const { return static_cast<int>(e0_a.rows()); }
  int items_b() const { return static_cast<int>(e0_b.rows()); }
  int max_len() const { return static_cast<int>(pos_a.rows()); }

  // Fixed parameter-group enumeration (checkpoint order, Adam slots,
  // gradient report).
  void visit(const std::function<void(const std::string&, Mat&)>& fn);
  void visit(const std::function<void(const std::string&, const Mat&)>& fn) const;
};

ModelParams init_params(const TrainConfig& config, int items_a, int items_b, std::uint64_t seed);

struct TransitionGraphs {
  SignedGraph a, b, c;
};

TransitionGraphs build_graphs(const DatasetSplit& split);

// Propagated embedding tables for one epoch.
struct PropagatedTables {
  Mat a, b, c;
};

PropagatedTables propagate_tables(const ModelParams& params, const TransitionGraphs& graphs,
                                  const TrainConfig& config);

// One next-item training/evaluation event inside a user's merged sequence.
struct Event {
  int user = 0;        // index into the batch
  int pos = 0;         // target position t within the (truncated) seq_c
  Domain domain = Domain::A;
  int target = 0;      // dense item id in its domain
};

// Tape handles for one encoded user.
struct EncodedUser {
  std::vector<int> c_items;  // C-table row per position
  std::vector<int> a_items, b_items;
  std::vector<Domain> c_domains;
  std::vector<int> c_feedbacks, a_feedbacks, b_feedbacks;
  std::vector<int> a_pos_in_c, b_pos_in_c;  // position of each single-domain event in seq_c
  int ec = -1, ea = -1, eb = -1;            // block outputs; -1 when the side is empty
};

struct BatchForward {
  std::vector<EncodedUser> users;
  std::vector<PooledViewNodes> pooled;
  std::vector<Event> events;
};

// Leaf registry so the optimizer can map gradients back to parameters.
struct ParamLeaves {
  std::vector<std::string> names;
  std::vector<int> ids;
  std::vector<Mat*> slots;
};

// Builds the full forward for a batch of users on the tape. `tables`
// supplies cached propagated values in epoch mode; pass nullptr in step
// mode to propagate in-tape from the current embeddings.
BatchForward forward_batch(ad::Tape& tape, ModelParams& params, const TransitionGraphs& graphs,
                           const std::vector<const SplitEntry*>& batch, const TrainConfig& config,
                           bool training, std::uint64_t step_seed, ParamLeaves& leaves,
                           const PropagatedTables* tables);

struct LossNodes {
  int single_a = -1, single_b = -1, cross_a = -1, cross_b = -1;
  int align = -1, cont = -1;
  int total = -1;
};

// Event CE terms (mean over all events, component split by target domain)
// plus weighted alignment/contrast.
LossNodes build_losses(ad::Tape& tape, const BatchForward& fwd, const ParamLeaves& leaves,
                       const TrainConfig& config);

struct LossRecord {
  double single_a = 0, single_b = 0, cross_a = 0, cross_b = 0;
  double align = 0, cont = 0, total = 0;
};

struct AdamState {
  std::vector<Mat> m, v;
  std::int64_t step = 0;
};

AdamState init_adam(const ModelParams& params);

// One Adam step on total_loss + l2 * sum of squared parameters.
LossRecord train_step(ModelParams& params, const std::vector<const SplitEntry*>& batch,
                      const TransitionGraphs& graphs, const TrainConfig& config, AdamState& adam,
                      const PropagatedTables* tables, std::uint64_t step_seed);

// ---- finite-difference harness -----------------------------------------

struct GradCheckGroup {
  std::string name;
  double max_rel_error = 0.0;
  int coords_checked = 0;
  int coords_kinked = 0;  // skipped: a kink sat inside the FD stencil
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  double max_rel_error = 0.0;
  bool passed(double tol = 1e-4) const { return max_rel_error < tol; }
};

// Central differences (h = 1e-5) against the tape gradients of the full
// total loss, sampling up to `coords_per_group` coordinates per group.
GradCheckReport gradient_check(ModelParams& params, const std::vector<const SplitEntry*>& batch,
                               const TransitionGraphs& graphs, const TrainConfig& config,
                               int coords_per_group = 40, std::uint64_t coord_seed = 7);

// ---- checkpointing ------------------------------------------------------

struct CheckpointHeader {
  std::string version;
  int d = 0, items_a = 0, items_b = 0, max_len = 0, n_heads = 0;
  std::uint64_t config_hash = 0;
};

void save_checkpoint(const std::string& path, const ModelParams& params, const AdamState& adam,
                     const TrainConfig& config);

struct Checkpoint {
  ModelParams params;
  AdamState adam;
  CheckpointHeader header;
  TrainConfig config;  // snapshot embedded in the header
};

Checkpoint load_checkpoint(const std::string& path, const TrainConfig& config);

// Loads with the config snapshot stored in the checkpoint itself.
Checkpoint load_checkpoint_auto(const std::string& path);

// Reads only the JSON header (for CLI inspection).
CheckpointHeader read_checkpoint_header(const std::string& path);
std::string read_checkpoint_header_json(const std::string& path);

std::uint64_t config_hash(const TrainConfig& config);

// Flat key/value form used by the TOML config file, CLI overrides and the
// checkpoint snapshot.
std::map<std::string, std::string> config_to_map(const TrainConfig& config);
TrainConfig config_from_map(const std::map<std::string, std::string>& kv,
                            const TrainConfig& base = {});
std::string config_to_toml(const TrainConfig& config);

// ---- training loop ------------------------------------------------------

struct FitResult {
  std::string best_checkpoint;
  std::string last_checkpoint;
  double best_validation_mrr10 = 0.0;
  int best_epoch = -1;
  std::vector<LossRecord> epoch_losses;
  std::vector<double> validation_mrr10;  // one entry per epoch
  std::vector<double> validation_hr10;
};

// Shuffled seeded batches, per-epoch propagation rebuild, validation
// MRR@10 checkpoint selection. Logs one JSON line per step to `log`.
FitResult fit(const TrainConfig& config, const DatasetSplit& split, const std::string& out_dir,
              std::ostream* log = nullptr);

}  // namespace t2
