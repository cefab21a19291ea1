#pragma once

// Single-file model checkpoints.
//
// Layout (all integers little-endian):
//   8 bytes   magic "SSCKPT01"
//   8 bytes   manifest length L
//   L bytes   JSON manifest: architecture, config, seed and, per parameter,
//             {name, offset, length} relative to the start of the data section
//   ...       data section: one NPY v1.0 record (f32) per parameter

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "stripnet/unet.hpp"

namespace stripnet {

inline constexpr char kCheckpointMagic[9] = "SSCKPT01";

struct CheckpointEntry {
  std::string name;
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
};

struct CheckpointManifest {
  ArchitectureKind kind = ArchitectureKind::Vanilla;
  UNetConfig config;
  std::uint64_t seed = 0;
  std::vector<CheckpointEntry> tensors;
};

std::vector<std::uint8_t> serialize_checkpoint(const UNetModel<float>& model);
UNetModel<float> deserialize_checkpoint(std::span<const std::uint8_t> bytes);
CheckpointManifest read_checkpoint_manifest(std::span<const std::uint8_t> bytes);

void save_checkpoint(const UNetModel<float>& model, const std::filesystem::path& path);
/// Throws DataError when the file is missing, FormatError when malformed.
UNetModel<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace stripnet
