#pragma once

#include <filesystem>

#include <json.hpp>

#include "msp/params.hpp"

namespace msp {

/// Binary container: 8-byte magic "MSPCKPT\0", u32 format version, u64 metadata
/// length, UTF-8 JSON metadata (layout, layout hash, configs, normalization),
/// u64 parameter count, then theta as little-endian float64.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  nlohmann::json meta;
  ParamVector theta;
};

void save_checkpoint(const std::filesystem::path& path, const ParamVector& theta, nlohmann::json meta);
/// Rebuilds the layout from the metadata and verifies its hash and the parameter count.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Layout as JSON rows {name, offset, rows, cols}.
nlohmann::json layout_to_json(const ParamLayout& layout);
ParamLayout layout_from_json(const nlohmann::json& j);
std::string hash_hex(std::uint64_t h);

}  // namespace msp
