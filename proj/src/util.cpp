#include "t2/util.hpp"

#include <cctype>
#include <chrono>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "t2/types.hpp"

namespace t2 {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(seed ^ splitmix64(a)) ^ splitmix64(b ^ 0xabcdef12345ULL));
}

std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64_file(const std::string& path) {
  return fnv1a64(read_text_file(path));
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::map<std::string, std::string> parse_flat_toml(const std::string& text,
                                                   const std::string& origin) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t[0] == '[') {
      throw DataError(origin + ":" + std::to_string(lineno) +
                      ": section headers are not supported (flat key = value only)");
    }
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw DataError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw DataError(origin + ":" + std::to_string(lineno) + ": empty key");
    }
    // strip an inline comment outside quotes
    if (!value.empty() && value[0] != '"') {
      std::size_t hash = value.find('#');
      if (hash != std::string::npos) value = trim(value.substr(0, hash));
    }
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    out[key] = value;
  }
  return out;
}

std::map<std::string, std::string> parse_flat_toml_file(const std::string& path) {
  return parse_flat_toml(read_text_file(path), path);
}

std::string make_manifest(const std::string& command,
                          const std::map<std::string, std::string>& config,
                          const std::map<std::string, std::string>& input_hashes,
                          std::uint64_t seed) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["version"] = "t2rec 0.1.0";
  j["seed"] = seed;
  j["config"] = config;
  j["inputs"] = input_hashes;
  j["created_unix"] = static_cast<std::int64_t>(
      std::chrono::duration_cast<std::chrono::seconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count());
  return j.dump(2) + "\n";
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << content;
  if (!out) throw DataError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace t2
