// t2rec: signed-transition-graph sequential recommender pipeline.
// Subcommands cover data prep, synthesis, training, evaluation and
// artifact inspection. Exit codes: 0 ok, 2 data error, 64 usage error,
// 70 internal invariant failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "t2/data.hpp"
#include "t2/evaluate.hpp"
#include "t2/model.hpp"
#include "t2/util.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitData = 2;
constexpr int kExitUsage = 64;
constexpr int kExitInternal = 70;

std::uint64_t env_seed_or(std::uint64_t fallback) {
  const char* env = std::getenv("T2_SEED");
  if (!env || !*env) return fallback;
  try {
    return std::stoull(env);
  } catch (const std::exception&) {
    throw t2::DataError("T2_SEED is not a valid integer");
  }
}

struct PrepArgs {
  std::string input, out;
  double threshold = 3.0;
  int min_per_domain = 3;
  std::int64_t max_span_seconds = 0;  // 0 = off
  bool global_split = false;
};

int run_prep(const PrepArgs& args) {
  auto parsed = t2::parse_interactions(args.input, args.threshold);
  std::optional<std::int64_t> span;
  if (args.max_span_seconds > 0) span = args.max_span_seconds;
  auto histories = t2::build_histories(parsed.interactions, args.min_per_domain, span);
  auto stats = t2::transition_stats(histories);
  auto split = t2::chronological_split(histories, {}, args.global_split);

  std::filesystem::create_directories(args.out);
  t2::write_histories_jsonl(args.out + "/histories.train.jsonl", split.train);
  t2::write_histories_jsonl(args.out + "/histories.validation.jsonl", split.validation);
  t2::write_histories_jsonl(args.out + "/histories.test.jsonl", split.test);
  t2::write_idmap_json(args.out + "/idmap.json", parsed.idmap);
  t2::write_stats_json(args.out + "/stats.json", stats);
  t2::write_text_file(
      args.out + "/manifest.json",
      t2::make_manifest("prep",
                        {{"input", args.input},
                         {"threshold", std::to_string(args.threshold)},
                         {"min_per_domain", std::to_string(args.min_per_domain)},
                         {"max_span_seconds", std::to_string(args.max_span_seconds)},
                         {"global_split", args.global_split ? "true" : "false"}},
                        {{args.input, std::to_string(t2::fnv1a64_file(args.input))}}, 0));

  std::cerr << nlohmann::ordered_json{{"users", histories.size()},
                                      {"train", split.train.size()},
                                      {"validation", split.validation.size()},
                                      {"test", split.test.size()},
                                      {"items_a", split.items_a},
                                      {"items_b", split.items_b}}
                   .dump()
            << '\n';
  std::cout << "prep: " << histories.size() << " users -> " << args.out << '\n';
  return kExitOk;
}

t2::DatasetSplit load_prep_dir(const std::string& dir) {
  t2::DatasetSplit split;
  split.train = t2::read_histories_jsonl(dir + "/histories.train.jsonl");
  split.validation = t2::read_histories_jsonl(dir + "/histories.validation.jsonl");
  split.test = t2::read_histories_jsonl(dir + "/histories.test.jsonl");
  t2::IdMap idmap = t2::read_idmap_json(dir + "/idmap.json");
  split.items_a = idmap.size(t2::Domain::A);
  split.items_b = idmap.size(t2::Domain::B);
  return split;
}

t2::TrainConfig assemble_config(const std::string& config_path,
                                const std::map<std::string, std::string>& overrides,
                                t2::TrainConfig base = {}) {
  if (!config_path.empty()) {
    base = t2::config_from_map(t2::parse_flat_toml_file(config_path), base);
  }
  return t2::config_from_map(overrides, base);
}

void add_config_overrides(CLI::App* cmd, std::map<std::string, std::string>& overrides) {
  static const char* keys[] = {"d",          "batch_size",   "epochs",       "learning_rate",
                               "l2",         "dropout",      "graph_layers", "n_heads",
                               "max_len",    "mu1",          "mu2",          "tau",
                               "alpha",      "seed",         "mask_mode",    "layer_mean",
                               "causal",     "propagate",    "pred_pool",    "cross_schedule",
                               "single_schedule"};
  for (const char* key : keys) {
    std::string k = key;
    cmd->add_option_function<std::string>(
        "--" + k, [&overrides, k](const std::string& v) { overrides[k] = v; });
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"t2rec: transition-aware cross-domain sequential recommender"};
  app.require_subcommand(1);

  // prep
  PrepArgs prep;
  auto* prep_cmd = app.add_subcommand("prep", "parse raw ratings, build and split histories");
  prep_cmd->add_option("--input", prep.input, "raw ratings file")->required();
  prep_cmd->add_option("--threshold", prep.threshold, "positive-feedback rating threshold");
  prep_cmd->add_option("--min-per-domain", prep.min_per_domain, "minimum items per domain");
  prep_cmd->add_option("--max-span-seconds", prep.max_span_seconds,
                       "keep only each user's trailing window of this many seconds");
  prep_cmd->add_flag("--global-split", prep.global_split,
                     "split on global timestamp percentiles instead of per user");
  prep_cmd->add_option("--out", prep.out, "output directory")->required();

  // synth
  t2::SynthSpec synth;
  std::string synth_out;
  bool synth_seed_given = false;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic interaction file");
  synth_cmd->add_option("--users", synth.users);
  synth_cmd->add_option("--items-a", synth.items_a);
  synth_cmd->add_option("--items-b", synth.items_b);
  synth_cmd->add_option("--len-min", synth.len_min);
  synth_cmd->add_option("--len-max", synth.len_max);
  synth_cmd->add_option("--type1", synth.type1_rate, "target Type-1 rate over cross pairs");
  synth_cmd->add_option("--type2", synth.type2_rate, "target Type-2 rate over cross pairs");
  synth_cmd->add_option("--cross-prob", synth.cross_prob);
  synth_cmd->add_flag("--planted", synth.planted, "plant a learnable next-item rule");
  synth_cmd->add_option("--seed", synth.seed)->each([&](const std::string&) {
    synth_seed_given = true;
  });
  synth_cmd->add_option("--out", synth_out, "output interactions file")->required();

  // stats
  std::string stats_data;
  double stats_threshold = 3.0;
  int stats_min = 1;
  auto* stats_cmd = app.add_subcommand("stats", "print transition statistics for a ratings file");
  stats_cmd->add_option("--data", stats_data, "raw ratings file")->required();
  stats_cmd->add_option("--threshold", stats_threshold);
  stats_cmd->add_option("--min-per-domain", stats_min);

  // train
  std::string train_config_path, train_data, train_out;
  std::map<std::string, std::string> train_overrides;
  auto* train_cmd = app.add_subcommand("train", "train on a prepared data directory");
  train_cmd->add_option("--config", train_config_path, "flat TOML config file");
  train_cmd->add_option("--data", train_data, "prep output directory")->required();
  train_cmd->add_option("--out", train_out, "output directory")->required();
  add_config_overrides(train_cmd, train_overrides);

  // eval
  std::string eval_checkpoint, eval_data, eval_split = "test", eval_out;
  int eval_negatives = 999;
  std::uint64_t eval_seed = 1234;
  bool eval_seed_given = false;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint with sampled ranking");
  eval_cmd->add_option("--checkpoint", eval_checkpoint)->required();
  eval_cmd->add_option("--data", eval_data, "prep output directory")->required();
  eval_cmd->add_option("--split", eval_split, "train|validation|test");
  eval_cmd->add_option("--negatives", eval_negatives);
  eval_cmd->add_option("--seed", eval_seed)->each([&](const std::string&) {
    eval_seed_given = true;
  });
  eval_cmd->add_option("--out", eval_out, "directory for metrics.json / metrics.csv");

  // diagnose
  std::string diag_checkpoint, diag_data, diag_out, diag_plot;
  auto* diag_cmd = app.add_subcommand("diagnose", "representation similarity diagnostics");
  diag_cmd->add_option("--checkpoint", diag_checkpoint)->required();
  diag_cmd->add_option("--data", diag_data)->required();
  diag_cmd->add_option("--out", diag_out, "directory for diagnostics.json");
  diag_cmd->add_option("--plot", diag_plot, "write an SVG bar chart here");

  // inspect-graph
  std::string ig_data, ig_which = "C", ig_out;
  auto* ig_cmd = app.add_subcommand("inspect-graph", "dump a transition graph as JSON");
  ig_cmd->add_option("--data", ig_data, "prep output directory")->required();
  ig_cmd->add_option("--which", ig_which, "A|B|C");
  ig_cmd->add_option("--out", ig_out, "output file (stdout when omitted)");

  // inspect-masks
  std::string im_domains, im_feedbacks;
  auto* im_cmd = app.add_subcommand("inspect-masks", "print the four cross-masks as 0/1 grids");
  im_cmd->add_option("--domains", im_domains, "e.g. ABA")->required();
  im_cmd->add_option("--feedbacks", im_feedbacks, "e.g. ++-")->required();

  // gradcheck
  std::string gc_config_path;
  std::map<std::string, std::string> gc_overrides;
  std::uint64_t gc_seed = 7;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient harness");
  gc_cmd->add_option("--config", gc_config_path, "flat TOML config file");
  add_config_overrides(gc_cmd, gc_overrides);

  // inspect-checkpoint
  std::string ic_path;
  auto* ic_cmd = app.add_subcommand("inspect-checkpoint", "print a checkpoint header");
  ic_cmd->add_option("--checkpoint", ic_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*prep_cmd) return run_prep(prep);

    if (*synth_cmd) {
      if (synth.len_min > synth.len_max) {
        throw CLI::ValidationError("--len-min must not exceed --len-max");
      }
      if (synth.type1_rate + synth.type2_rate > 1.0) {
        throw CLI::ValidationError("--type1 + --type2 must not exceed 1");
      }
      if (!synth_seed_given) synth.seed = env_seed_or(synth.seed);
      auto interactions = t2::generate_synthetic(synth);
      t2::write_text_file(synth_out, t2::serialize_interactions(interactions));
      std::cout << "synth: " << interactions.size() << " interactions -> " << synth_out << '\n';
      return kExitOk;
    }

    if (*stats_cmd) {
      auto parsed = t2::parse_interactions(stats_data, stats_threshold);
      auto histories = t2::build_histories(parsed.interactions, stats_min);
      auto stats = t2::transition_stats(histories);
      nlohmann::ordered_json j;
      j["type1_count"] = stats.type1;
      j["type2_count"] = stats.type2;
      j["other_count"] = stats.other;
      j["cross_pairs"] = stats.cross_total();
      j["type1_pct"] = stats.type1_pct();
      j["type2_pct"] = stats.type2_pct();
      j["other_pct"] = stats.other_pct();
      std::cout << j.dump(2) << '\n';
      return kExitOk;
    }

    if (*train_cmd) {
      t2::TrainConfig config = assemble_config(train_config_path, train_overrides);
      if (!train_overrides.count("seed")) config.seed = env_seed_or(config.seed);
      t2::DatasetSplit split = load_prep_dir(train_data);
      t2::FitResult result = t2::fit(config, split, train_out, &std::cerr);
      t2::write_text_file(train_out + "/config.toml", t2::config_to_toml(config));
      std::map<std::string, std::string> hashes;
      for (const char* name : {"histories.train.jsonl", "histories.validation.jsonl",
                               "histories.test.jsonl", "idmap.json"}) {
        std::string p = train_data + "/" + name;
        hashes[p] = std::to_string(t2::fnv1a64_file(p));
      }
      t2::write_text_file(train_out + "/manifest.json",
                          t2::make_manifest("train", t2::config_to_map(config), hashes,
                                            config.seed));
      std::cout << "train: best validation MRR@10 " << result.best_validation_mrr10 << " at epoch "
                << result.best_epoch << ", checkpoint " << result.best_checkpoint << '\n';
      return kExitOk;
    }

    if (*eval_cmd) {
      if (!eval_seed_given) eval_seed = env_seed_or(eval_seed);
      t2::EvalSlice slice;
      if (eval_split == "train") slice = t2::EvalSlice::Train;
      else if (eval_split == "validation") slice = t2::EvalSlice::Validation;
      else if (eval_split == "test") slice = t2::EvalSlice::Test;
      else throw CLI::ValidationError("--split must be train, validation or test");
      t2::Checkpoint ck = t2::load_checkpoint_auto(eval_checkpoint);
      t2::DatasetSplit split = load_prep_dir(eval_data);
      t2::TransitionGraphs graphs = t2::build_graphs(split);
      t2::EvalResult result =
          t2::evaluate(ck.params, split, slice, graphs, ck.config, eval_seed, eval_negatives);
      std::string json = t2::metrics_to_json(result);
      std::cerr << "eval: split=" << eval_split << " events=" << result.overall.events
                << " MRR@10=" << result.overall.mrr10 << " HR@10=" << result.overall.hr10
                << '\n';
      if (!eval_out.empty()) {
        std::filesystem::create_directories(eval_out);
        t2::write_text_file(eval_out + "/metrics.json", json);
        t2::write_text_file(eval_out + "/metrics.csv", t2::metrics_to_csv(result));
        t2::write_text_file(
            eval_out + "/manifest.json",
            t2::make_manifest("eval",
                              {{"checkpoint", eval_checkpoint},
                               {"split", eval_split},
                               {"negatives", std::to_string(eval_negatives)}},
                              {{eval_checkpoint,
                                std::to_string(t2::fnv1a64_file(eval_checkpoint))}},
                              eval_seed));
      }
      std::cout << json;
      return kExitOk;
    }

    if (*diag_cmd) {
      t2::Checkpoint ck = t2::load_checkpoint_auto(diag_checkpoint);
      t2::DatasetSplit split = load_prep_dir(diag_data);
      t2::TransitionGraphs graphs = t2::build_graphs(split);
      t2::SimilarityReport report =
          t2::similarity_diagnostics(ck.params, split, graphs, ck.config);
      std::string json = t2::similarity_to_json(report);
      if (!diag_out.empty()) {
        std::filesystem::create_directories(diag_out);
        t2::write_text_file(diag_out + "/diagnostics.json", json);
      }
      if (!diag_plot.empty()) t2::write_text_file(diag_plot, t2::similarity_to_svg(report));
      std::cout << json;
      return kExitOk;
    }

    if (*ig_cmd) {
      t2::DatasetSplit split = load_prep_dir(ig_data);
      t2::GraphKind which;
      if (ig_which == "A") which = t2::GraphKind::A;
      else if (ig_which == "B") which = t2::GraphKind::B;
      else if (ig_which == "C") which = t2::GraphKind::C;
      else throw CLI::ValidationError("--which must be A, B or C");
      t2::SignedGraph g =
          t2::build_transition_matrix(split.train, which, split.items_a, split.items_b);
      std::string json = t2::graph_to_json(g);
      if (!ig_out.empty()) t2::write_text_file(ig_out, json);
      else std::cout << json;
      return kExitOk;
    }

    if (*im_cmd) {
      if (im_domains.size() != im_feedbacks.size()) {
        throw CLI::ValidationError("--domains and --feedbacks must have equal length");
      }
      std::vector<t2::Domain> domains;
      std::vector<int> feedbacks;
      for (char c : im_domains) {
        if (c == 'A') domains.push_back(t2::Domain::A);
        else if (c == 'B') domains.push_back(t2::Domain::B);
        else throw CLI::ValidationError("--domains may contain only A and B");
      }
      for (char c : im_feedbacks) {
        if (c == '+') feedbacks.push_back(1);
        else if (c == '-') feedbacks.push_back(-1);
        else throw CLI::ValidationError("--feedbacks may contain only + and -");
      }
      t2::MaskSet set = t2::build_mask_set(domains, feedbacks);
      std::cout << "M1 (feedback differs, domain differs)\n" << t2::grid_to_string(set.cross.m1)
                << "M2 (feedback differs, same domain)\n" << t2::grid_to_string(set.cross.m2)
                << "M3 (same feedback, domain differs)\n" << t2::grid_to_string(set.cross.m3)
                << "M4 (same feedback, same domain)\n" << t2::grid_to_string(set.cross.m4);
      return kExitOk;
    }

    if (*gc_cmd) {
      t2::TrainConfig tiny;
      tiny.d = 8;
      tiny.n_heads = 4;
      tiny.max_len = 8;
      tiny.graph_layers = 1;
      tiny.dropout = 0.0;
      t2::TrainConfig config = assemble_config(gc_config_path, gc_overrides, tiny);
      gc_seed = gc_overrides.count("seed") ? config.seed : env_seed_or(gc_seed);

      t2::SynthSpec spec;
      spec.users = 4;
      spec.items_a = 6;
      spec.items_b = 6;
      spec.len_min = 5;
      spec.len_max = 6;
      spec.seed = gc_seed;
      auto interactions = t2::generate_synthetic(spec);
      auto histories = t2::build_histories(interactions, 1);
      auto split = t2::chronological_split(histories, {1.0, 0.0, 0.0});
      t2::TransitionGraphs graphs = t2::build_graphs(split);
      t2::ModelParams params =
          t2::init_params(config, split.items_a, split.items_b, gc_seed);
      std::vector<const t2::SplitEntry*> batch;
      for (const auto& entry : split.train) batch.push_back(&entry);
      t2::GradCheckReport report = t2::gradient_check(params, batch, graphs, config);

      nlohmann::ordered_json j;
      j["max_rel_error"] = report.max_rel_error;
      j["passed"] = report.passed();
      auto groups = nlohmann::ordered_json::array();
      for (const auto& g : report.groups) {
        groups.push_back({{"group", g.name},
                          {"max_rel_error", g.max_rel_error},
                          {"coords", g.coords_checked}});
      }
      j["groups"] = std::move(groups);
      std::cout << j.dump(2) << '\n';
      return report.passed() ? kExitOk : kExitInternal;
    }

    if (*ic_cmd) {
      std::cout << t2::read_checkpoint_header_json(ic_path);
      return kExitOk;
    }
  } catch (const CLI::Error& e) {
    std::cerr << e.what() << '\n';
    return kExitUsage;
  } catch (const t2::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const t2::InternalError& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitUsage;
}
