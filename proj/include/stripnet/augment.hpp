#pragma once

// Spatial and intensity augmentation, dataset expansion and slicing.
//
// Order of operations for every augmented copy: z-normalization, then all
// spatial steps (composed into one affine map and resampled once), then the
// intensity steps in listed order. Spatial steps act in-plane on every slice
// along the first axis; masks are resampled nearest-neighbour and stay binary.

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "stripnet/volume.hpp"
#include "stripnet/znorm.hpp"

namespace stripnet {

/// In-plane rotation about the slice centre, degrees in [-10, 10].
struct Rotate {
  double degrees = 0.0;
};
/// Shift in pixels, each component in [-12, 12].
struct Translate {
  double dy = 0.0;
  double dx = 0.0;
};
/// Isotropic zoom about the slice centre, factor in [0.9, 1.1].
struct Scale {
  double factor = 1.0;
};
/// Mirror along rows (axis 0) or columns (axis 1).
struct Flip {
  int axis = 1;
};
/// Gamma curve on min-max normalized intensities, gamma in [0.8, 1.25].
struct Gamma {
  double gamma = 1.0;
};
/// Additive zero-mean Gaussian noise, sigma in [0, 0.1].
struct GaussianNoise {
  double sigma = 0.0;
};
/// Multiplicative linear ramp 1 + amplitude * t, t in [-1, 1] along the
/// given in-plane direction; amplitude in [0, 0.2].
struct BiasGradient {
  double amplitude = 0.0;
  double direction_degrees = 0.0;
};

using TransformStep = std::variant<Rotate, Translate, Scale, Flip, Gamma, GaussianNoise, BiasGradient>;

bool is_spatial(const TransformStep& step);

struct TransformSpec {
  std::vector<TransformStep> steps;
  /// Seeds the noise generator.
  std::uint64_t seed = 0;

  bool is_identity() const { return steps.empty(); }
  /// Throws ConfigError when a parameter leaves its allowed range.
  void validate() const;
};

std::string transform_to_json(const TransformSpec& spec);
TransformSpec transform_from_json(std::string_view text);

/// Draws one random composition within the allowed ranges.
TransformSpec draw_transform(std::uint64_t seed);

struct TransformedPair {
  Volume3D scan;
  Volume3D mask;
};

/// Applies spec to a scan and its mask (identical geometry). Scans are
/// sampled bilinearly, masks nearest-neighbour; both zero-filled outside.
TransformedPair apply_transform(const Volume3D& scan, const Volume3D& mask, const TransformSpec& spec);

/// Copy 0 is always the identity; copies 1..factor-1 are drawn from seeds
/// derived from (master_seed, scan_index, copy).
struct AugmentationPlan {
  std::size_t factor = 5;
  std::uint64_t master_seed = 0;

  TransformSpec spec_for(std::size_t scan_index, std::size_t copy) const;
};

struct ScanPair {
  std::string id;
  Volume3D scan;
  Volume3D mask;
};

struct AugmentedScan {
  std::string id;
  std::size_t source_index = 0;
  std::size_t copy = 0;
  TransformSpec spec;
  ZNormStats stats;
  Volume3D scan;
  Volume3D mask;
};

/// The copies of a single scan: z-normalized with mask statistics, then
/// transformed per the plan.
std::vector<AugmentedScan> expand_scan(const ScanPair& pair, std::size_t scan_index, const AugmentationPlan& plan);

/// factor * scans.size() outputs, ordered by scan then copy.
std::vector<AugmentedScan> expand_dataset(const std::vector<ScanPair>& scans, std::size_t factor, std::uint64_t seed);

struct Slice2D {
  std::string scan_id;
  std::size_t index = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<double> values;
};

/// The d slices along the first axis, in order.
std::vector<Slice2D> extract_slices(const Volume3D& volume, std::string_view scan_id = "");

/// Inverse of extract_slices.
Volume3D stack_slices(const std::vector<Slice2D>& slices);

}  // namespace stripnet
