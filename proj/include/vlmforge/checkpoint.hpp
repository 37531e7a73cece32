#pragma once

// Checkpoint format, version 1:
//   magic "VLMF" | u32 version | u32 count | entries...
//   entry: u32 name_len | name bytes | u32 ndim | u32 dims[ndim] | f64 data[]
// all little-endian, doubles raw. A text manifest (<file>.manifest.txt) lists
// version, hashes, and one line per parameter: name, shape, byte offset.

#include <map>
#include <string>
#include <vector>

#include "vlmforge/model.hpp"

namespace vlmforge::checkpoint {

inline constexpr std::uint32_t kVersion = 1;

void save(const std::string& path, const std::vector<model::NamedParam>& params,
          const std::string& config_hash, const std::string& vocab_hash);

struct LoadedArray {
    std::vector<int> shape;
    std::vector<double> data;
};

std::map<std::string, LoadedArray> load(const std::string& path);

// Copies arrays into the model parameters; name or shape mismatches raise
// parse_error (data/schema).
void apply(model::VlmModel& m, const std::map<std::string, LoadedArray>& arrays);

// fnv-1a over the raw bytes of all parameters in a group, in name order.
std::string group_hash(const std::vector<model::NamedParam>& params, const std::string& group);

}  // namespace vlmforge::checkpoint
