#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace t2 {

std::uint64_t splitmix64(std::uint64_t x);

// Cheap order-free seed derivation: mix the base seed with labelled parts.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

std::uint64_t fnv1a64(const std::string& data);
std::uint64_t fnv1a64_file(const std::string& path);  // throws DataError if unreadable

// Flat key = value TOML subset: comments, quoted strings, ints, floats,
// booleans. Section headers are rejected.
std::map<std::string, std::string> parse_flat_toml(const std::string& text,
                                                   const std::string& origin);
std::map<std::string, std::string> parse_flat_toml_file(const std::string& path);

// manifest.json content for an output directory.
std::string make_manifest(const std::string& command,
                          const std::map<std::string, std::string>& config,
                          const std::map<std::string, std::string>& input_hashes,
                          std::uint64_t seed);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);  // throws DataError

}  // namespace t2
