#pragma once

#include <string_view>

#include "stripnet/volume.hpp"

namespace stripnet {

/// Which voxels the normalization statistics are taken over.
enum class StatsRegion {
  /// Voxels where a ground-truth brain mask is 1 (training).
  Mask,
  /// Voxels with intensity > 0 (inference, background is zero).
  Nonzero,
};

std::string_view to_string(StatsRegion region);

struct ZNormStats {
  double mean = 0.0;
  /// Population standard deviation (divisor N).
  double stddev = 1.0;
  StatsRegion region = StatsRegion::Nonzero;
  std::size_t count = 0;
};

struct ZNormResult {
  Volume3D volume;
  ZNormStats stats;
};

/// Statistics over the mask region; mask must be binary and match dims.
ZNormStats znorm_stats(const Volume3D& volume, const Volume3D& mask);
/// Statistics over voxels > 0.
ZNormStats znorm_stats(const Volume3D& volume);

/// (v - mean) / stddev applied to every voxel.
Volume3D apply_znorm(const Volume3D& volume, const ZNormStats& stats);

/// Normalizes with brain statistics from the mask. Throws ZeroStdError when
/// the region has fewer than two voxels or a spread below 1e-12.
ZNormResult znorm(const Volume3D& volume, const Volume3D& mask);
/// Normalizes with statistics from the non-zero voxels.
ZNormResult znorm(const Volume3D& volume);

}  // namespace stripnet
