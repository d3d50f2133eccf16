#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "gfz/model.hpp"

namespace gfz {

inline constexpr std::uint16_t kCheckpointVersion = 1;

/// GFZC container: magic, version, architecture tag, a manifest of parameter
/// names and shapes, then the float32 little-endian data in manifest order.
std::vector<std::uint8_t> encode_checkpoint(const Model& model);
Model decode_checkpoint(std::vector<std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Model& model);
/// Rebuilds the model from the manifest. Freeze flags and rates are reset.
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace gfz
