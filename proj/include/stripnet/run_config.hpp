#pragma once

// Run configuration: a flat text file of `key = value` lines with dotted
// keys. Blank lines and text after '#' are ignored. List values are comma
// separated. Unknown keys are errors.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "stripnet/train.hpp"
#include "stripnet/unet.hpp"
#include "stripnet/znorm.hpp"

namespace stripnet {

struct RunConfig {
  ArchitectureKind arch = ArchitectureKind::Vanilla;
  /// Seeds model init, the holdout split, batch order and augmentation.
  std::uint64_t seed = 0;
  std::filesystem::path out = "stripnet_out";

  /// height/width are taken from the data at train time.
  UNetConfig model;
  TrainingConfig train;
  std::size_t cache_slices = 512;

  /// Raw volumes (.nii or .npy) and optional matching masks.
  std::vector<std::filesystem::path> scans;
  std::vector<std::filesystem::path> masks;
  /// Statistics region for preprocess; mask requires data.masks.
  StatsRegion region = StatsRegion::Mask;
  /// Augmented dataset directory consumed by train.
  std::filesystem::path dataset;

  std::size_t augment_factor = 5;

  std::filesystem::path checkpoint;
  std::filesystem::path volume;
  std::filesystem::path ground_truth;
  double threshold = 0.5;
};

/// Every key with its current value, one per line, in canonical order.
std::string format_run_config(const RunConfig& cfg);

/// Applies the assignments in text on top of base. Throws ConfigError.
RunConfig parse_run_config(std::string_view text, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

/// Sets one key from its textual value. Throws ConfigError.
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);

/// 64-bit FNV-1a over the canonical text.
std::uint64_t config_hash(const RunConfig& cfg);

/// Checks ranges and cross-key consistency. Throws ConfigError.
void validate(const RunConfig& cfg);

}  // namespace stripnet
