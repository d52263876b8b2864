#include <sstream>

#include "t2/model.hpp"
#include "t2/util.hpp"

namespace t2 {

namespace {

std::string fmt_double(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

std::map<std::string, std::string> config_to_map(const TrainConfig& c) {
  std::map<std::string, std::string> kv;
  kv["d"] = std::to_string(c.d);
  kv["batch_size"] = std::to_string(c.batch_size);
  kv["epochs"] = std::to_string(c.epochs);
  kv["learning_rate"] = fmt_double(c.learning_rate);
  kv["l2"] = fmt_double(c.l2);
  kv["dropout"] = fmt_double(c.dropout);
  kv["graph_layers"] = std::to_string(c.graph_layers);
  kv["n_heads"] = std::to_string(c.n_heads);
  kv["max_len"] = std::to_string(c.max_len);
  kv["mu1"] = fmt_double(c.mu1);
  kv["mu2"] = fmt_double(c.mu2);
  kv["tau"] = fmt_double(c.tau);
  kv["alpha"] = fmt_double(c.alpha);
  kv["seed"] = std::to_string(c.seed);
  kv["mask_mode"] = c.mask_mode == MaskMode::Additive ? "additive" : "hadamard";
  kv["layer_mean"] = c.mean_rule == LayerMeanRule::KPlus1 ? "k+1" : "k";
  kv["causal"] = c.causal ? "true" : "false";
  kv["propagate"] = c.propagate_mode == PropagateMode::Epoch ? "epoch" : "step";
  kv["pred_pool"] = c.pred_pool == PredPool::Last ? "last" : "mean";
  switch (c.cross_schedule) {
    case CrossSchedule::Full: kv["cross_schedule"] = "full"; break;
    case CrossSchedule::OnlyM1: kv["cross_schedule"] = "only_m1"; break;
    case CrossSchedule::OnlyM2: kv["cross_schedule"] = "only_m2"; break;
    case CrossSchedule::OnlyM3: kv["cross_schedule"] = "only_m3"; break;
    case CrossSchedule::OnlyM4: kv["cross_schedule"] = "only_m4"; break;
  }
  switch (c.single_schedule) {
    case SingleSchedule::Alternate: kv["single_schedule"] = "alternate"; break;
    case SingleSchedule::OnlyMf: kv["single_schedule"] = "only_mf"; break;
    case SingleSchedule::OnlyMfNeg: kv["single_schedule"] = "only_mf_neg"; break;
  }
  return kv;
}

TrainConfig config_from_map(const std::map<std::string, std::string>& kv,
                            const TrainConfig& base) {
  TrainConfig c = base;
  auto geti = [&](const char* key, int& slot) {
    auto it = kv.find(key);
    if (it != kv.end()) slot = std::stoi(it->second);
  };
  auto getd = [&](const char* key, double& slot) {
    auto it = kv.find(key);
    if (it != kv.end()) slot = std::stod(it->second);
  };
  try {
    geti("d", c.d);
    geti("batch_size", c.batch_size);
    geti("epochs", c.epochs);
    getd("learning_rate", c.learning_rate);
    getd("l2", c.l2);
    getd("dropout", c.dropout);
    geti("graph_layers", c.graph_layers);
    geti("n_heads", c.n_heads);
    geti("max_len", c.max_len);
    getd("mu1", c.mu1);
    getd("mu2", c.mu2);
    getd("tau", c.tau);
    getd("alpha", c.alpha);
    if (auto it = kv.find("seed"); it != kv.end()) c.seed = std::stoull(it->second);
  } catch (const std::exception&) {
    throw DataError("config: non-numeric value for a numeric key");
  }

  auto get_enum = [&](const char* key, auto& slot, auto parse) {
    auto it = kv.find(key);
    if (it != kv.end()) slot = parse(it->second);
  };
  get_enum("mask_mode", c.mask_mode, [](const std::string& v) {
    if (v == "additive") return MaskMode::Additive;
    if (v == "hadamard") return MaskMode::Hadamard;
    throw DataError("config: mask_mode must be additive or hadamard");
  });
  get_enum("layer_mean", c.mean_rule, [](const std::string& v) {
    if (v == "k+1") return LayerMeanRule::KPlus1;
    if (v == "k") return LayerMeanRule::Literal;
    throw DataError("config: layer_mean must be k+1 or k");
  });
  get_enum("causal", c.causal, [](const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw DataError("config: causal must be true or false");
  });
  get_enum("propagate", c.propagate_mode, [](const std::string& v) {
    if (v == "epoch") return PropagateMode::Epoch;
    if (v == "step") return PropagateMode::Step;
    throw DataError("config: propagate must be epoch or step");
  });
  get_enum("pred_pool", c.pred_pool, [](const std::string& v) {
    if (v == "last") return PredPool::Last;
    if (v == "mean") return PredPool::Mean;
    throw DataError("config: pred_pool must be last or mean");
  });
  get_enum("cross_schedule", c.cross_schedule, [](const std::string& v) {
    if (v == "full") return CrossSchedule::Full;
    if (v == "only_m1") return CrossSchedule::OnlyM1;
    if (v == "only_m2") return CrossSchedule::OnlyM2;
    if (v == "only_m3") return CrossSchedule::OnlyM3;
    if (v == "only_m4") return CrossSchedule::OnlyM4;
    throw DataError("config: unknown cross_schedule " + v);
  });
  get_enum("single_schedule", c.single_schedule, [](const std::string& v) {
    if (v == "alternate") return SingleSchedule::Alternate;
    if (v == "only_mf") return SingleSchedule::OnlyMf;
    if (v == "only_mf_neg") return SingleSchedule::OnlyMfNeg;
    throw DataError("config: unknown single_schedule " + v);
  });

  for (const auto& [key, value] : kv) {
    static const char* known[] = {"d",          "batch_size",   "epochs",       "learning_rate",
                                  "l2",         "dropout",      "graph_layers", "n_heads",
                                  "max_len",    "mu1",          "mu2",          "tau",
                                  "alpha",      "seed",         "mask_mode",    "layer_mean",
                                  "causal",     "propagate",    "pred_pool",    "cross_schedule",
                                  "single_schedule"};
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw DataError("config: unknown key '" + key + "'");
    (void)value;
  }
  return c;
}

std::string config_to_toml(const TrainConfig& config) {
  std::ostringstream out;
  for (const auto& [key, value] : config_to_map(config)) {
    bool quote = key == "mask_mode" || key == "layer_mean" || key == "causal" ||
                 key == "propagate" || key == "pred_pool" || key == "cross_schedule" ||
                 key == "single_schedule";
    if (key == "causal") quote = false;  // booleans are bare in TOML
    out << key << " = ";
    if (quote) out << '"' << value << '"';
    else out << value;
    out << '\n';
  }
  return out.str();
}

}  // namespace t2
