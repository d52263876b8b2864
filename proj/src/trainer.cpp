#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "t2/evaluate.hpp"
#include "t2/model.hpp"
#include "t2/util.hpp"

namespace t2 {

namespace {

std::string loss_record_json(std::int64_t step, const LossRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["single_A"] = r.single_a;
  j["single_B"] = r.single_b;
  j["cross_A"] = r.cross_a;
  j["cross_B"] = r.cross_b;
  j["align"] = r.align;
  j["cont"] = r.cont;
  j["total"] = r.total;
  return j.dump();
}

}  // namespace

FitResult fit(const TrainConfig& config, const DatasetSplit& split, const std::string& out_dir,
              std::ostream* log) {
  config.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create output directory " + out_dir + ": " + ec.message());
  {
    std::ofstream probe(out_dir + "/.write_probe");
    if (!probe) throw DataError("output directory not writable: " + out_dir);
  }
  std::filesystem::remove(out_dir + "/.write_probe", ec);

  TransitionGraphs graphs = build_graphs(split);
  ModelParams params = init_params(config, split.items_a, split.items_b, config.seed);
  AdamState adam = init_adam(params);

  const std::string best_path = out_dir + "/checkpoint_best.t2ck";
  const std::string last_path = out_dir + "/checkpoint_last.t2ck";
  std::ofstream step_log(out_dir + "/train_log.jsonl");
  if (!step_log) throw DataError("cannot open train log in " + out_dir);

  FitResult result;
  result.best_checkpoint = best_path;
  save_checkpoint(best_path, params, adam, config);  // epochs=0 ships the initial state

  const std::uint64_t eval_seed = mix_seed(config.seed, 0xE7A1);
  std::int64_t step = 0;

  std::vector<std::size_t> order(split.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    PropagatedTables tables = propagate_tables(params, graphs, config);
    const PropagatedTables* cached =
        config.propagate_mode == PropagateMode::Epoch ? &tables : nullptr;

    std::mt19937_64 shuffle_rng(mix_seed(config.seed, 0x5F, epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    LossRecord epoch_record;
    int batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      std::size_t end = std::min(order.size(), begin + config.batch_size);
      std::vector<const SplitEntry*> batch;
      batch.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) batch.push_back(&split.train[order[i]]);

      LossRecord r = train_step(params, batch, graphs, config, adam, cached,
                                mix_seed(config.seed, 0x57E9, step));
      std::string line = loss_record_json(step, r);
      step_log << line << '\n';
      if (log) (*log) << line << '\n';

      epoch_record.single_a += r.single_a;
      epoch_record.single_b += r.single_b;
      epoch_record.cross_a += r.cross_a;
      epoch_record.cross_b += r.cross_b;
      epoch_record.align += r.align;
      epoch_record.cont += r.cont;
      epoch_record.total += r.total;
      ++batches;
      ++step;
    }
    if (batches > 0) {
      double inv = 1.0 / batches;
      epoch_record.single_a *= inv;
      epoch_record.single_b *= inv;
      epoch_record.cross_a *= inv;
      epoch_record.cross_b *= inv;
      epoch_record.align *= inv;
      epoch_record.cont *= inv;
      epoch_record.total *= inv;
    }
    result.epoch_losses.push_back(epoch_record);

    double val_mrr = 0.0, val_hr10 = 0.0;
    if (!split.validation.empty()) {
      EvalResult val = evaluate(params, split, EvalSlice::Validation, graphs, config, eval_seed);
      val_mrr = val.overall.mrr10;
      val_hr10 = val.overall.hr10;
    }
    result.validation_mrr10.push_back(val_mrr);
    result.validation_hr10.push_back(val_hr10);
    if (val_mrr > result.best_validation_mrr10 || result.best_epoch < 0) {
      result.best_validation_mrr10 = val_mrr;
      result.best_epoch = epoch;
      save_checkpoint(best_path, params, adam, config);
    }
    if (log) {
      nlohmann::ordered_json j;
      j["epoch"] = epoch;
      j["train_total"] = epoch_record.total;
      j["validation_mrr10"] = val_mrr;
      (*log) << j.dump() << '\n';
    }
  }

  save_checkpoint(last_path, params, adam, config);
  result.last_checkpoint = last_path;
  return result;
}

}  // namespace t2
