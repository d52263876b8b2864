#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "t2/model.hpp"
#include "t2/util.hpp"

namespace t2 {

namespace {

constexpr char kMagic[4] = {'T', '2', 'C', 'K'};
constexpr std::uint32_t kFormatVersion = 1;

std::string config_canonical(const TrainConfig& c) {
  std::ostringstream s;
  s << "d=" << c.d << ";heads=" << c.n_heads << ";K=" << c.graph_layers
    << ";max_len=" << c.max_len << ";mask=" << (c.mask_mode == MaskMode::Additive ? "add" : "had")
    << ";mean=" << (c.mean_rule == LayerMeanRule::KPlus1 ? "k+1" : "k")
    << ";causal=" << c.causal << ";pred=" << (c.pred_pool == PredPool::Last ? "last" : "mean");
  return s.str();
}

void write_u64(std::ostream& out, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

std::uint64_t read_u64(std::istream& in) {
  char buf[8];
  in.read(buf, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i]))
                                   << (8 * i);
  return v;
}

void write_mat(std::ostream& out, const Mat& m) {
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
}

void read_mat(std::istream& in, Mat& m) {
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * m.size()));
}

nlohmann::ordered_json header_json(const ModelParams& params, const AdamState& adam,
                                   const TrainConfig& config) {
  nlohmann::ordered_json j;
  j["format"] = kFormatVersion;
  j["version"] = "t2rec 0.1.0";
  j["d"] = params.d();
  j["items_a"] = params.items_a();
  j["items_b"] = params.items_b();
  j["max_len"] = params.max_len();
  j["n_heads"] = params.block_a.n_heads;
  j["config_hash"] = config_hash(config);
  j["config"] = config_to_map(config);
  auto tensors = nlohmann::ordered_json::array();
  params.visit([&](const std::string& name, const Mat& m) {
    tensors.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  });
  j["tensors"] = std::move(tensors);
  j["adam_step"] = adam.step;
  return j;
}

}  // namespace

std::uint64_t config_hash(const TrainConfig& config) {
  return fnv1a64(config_canonical(config));
}

void save_checkpoint(const std::string& path, const ModelParams& params, const AdamState& adam,
                     const TrainConfig& config) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, 4);
  std::string header = header_json(params, adam, config).dump();
  write_u64(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  params.visit([&](const std::string&, const Mat& m) { write_mat(out, m); });
  for (const Mat& m : adam.m) write_mat(out, m);
  for (const Mat& m : adam.v) write_mat(out, m);
  if (!out) throw DataError("checkpoint write failed: " + path);
}

namespace {

nlohmann::json read_header(std::istream& in, const std::string& path) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError(path + ": not a t2rec checkpoint");
  }
  std::uint64_t len = read_u64(in);
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError(path + ": truncated checkpoint header");
  try {
    return nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": bad checkpoint header: " + e.what());
  }
}

CheckpointHeader header_from_json(const nlohmann::json& j) {
  CheckpointHeader h;
  h.version = j.at("version").get<std::string>();
  h.d = j.at("d").get<int>();
  h.items_a = j.at("items_a").get<int>();
  h.items_b = j.at("items_b").get<int>();
  h.max_len = j.at("max_len").get<int>();
  h.n_heads = j.at("n_heads").get<int>();
  h.config_hash = j.at("config_hash").get<std::uint64_t>();
  return h;
}

}  // namespace

CheckpointHeader read_checkpoint_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  return header_from_json(read_header(in, path));
}

std::string read_checkpoint_header_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  return read_header(in, path).dump(2) + "\n";
}

Checkpoint load_checkpoint_auto(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  nlohmann::json j = read_header(in, path);
  std::map<std::string, std::string> kv;
  for (const auto& [key, value] : j.at("config").items()) {
    kv[key] = value.get<std::string>();
  }
  return load_checkpoint(path, config_from_map(kv));
}

Checkpoint load_checkpoint(const std::string& path, const TrainConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  nlohmann::json j = read_header(in, path);
  CheckpointHeader h = header_from_json(j);

  auto expect = [&](const std::string& field, int got, int want) {
    if (got != want) {
      throw DataError(path + ": checkpoint field '" + field + "' is " + std::to_string(got) +
                      " but the active config needs " + std::to_string(want));
    }
  };
  expect("d", h.d, config.d);
  expect("max_len", h.max_len, config.max_len);
  expect("n_heads", h.n_heads, config.n_heads);

  Checkpoint ck;
  ck.header = h;
  ck.config = config;
  ck.params = init_params(config, h.items_a, h.items_b, /*seed=*/0);

  // validate recorded tensor shapes against the reconstructed layout
  std::size_t idx = 0;
  const auto& tensors = j.at("tensors");
  ck.params.visit([&](const std::string& name, Mat& m) {
    if (idx >= tensors.size()) throw DataError(path + ": checkpoint lists too few tensors");
    const auto& t = tensors[idx];
    if (t.at("name").get<std::string>() != name ||
        t.at("rows").get<Eigen::Index>() != m.rows() ||
        t.at("cols").get<Eigen::Index>() != m.cols()) {
      throw DataError(path + ": checkpoint tensor mismatch at '" + name + "'");
    }
    ++idx;
  });
  if (idx != tensors.size()) throw DataError(path + ": checkpoint lists too many tensors");

  ck.params.visit([&](const std::string&, Mat& m) { read_mat(in, m); });
  ck.adam = init_adam(ck.params);
  ck.adam.step = j.at("adam_step").get<std::int64_t>();
  for (Mat& m : ck.adam.m) read_mat(in, m);
  for (Mat& m : ck.adam.v) read_mat(in, m);
  if (!in) throw DataError(path + ": truncated checkpoint tensor data");
  return ck;
}

}  // namespace t2
