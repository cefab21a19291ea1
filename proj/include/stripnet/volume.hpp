#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace stripnet {

/// Element precision a volume was read from or will be stored as.
enum class Precision { F64, F32, F16, I16, I8, U8 };

std::string_view to_string(Precision p);

/// Scalar volume of d x h x w voxels, row-major (w fastest). The first axis
/// is the slicing axis (sagittal for NFBS-style scans).
struct Volume3D {
  std::size_t d = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  Precision precision = Precision::F64;
  std::vector<double> data;
  /// Source path and an ordered log of applied transforms.
  std::string source;
  std::vector<std::string> history;

  Volume3D() = default;
  Volume3D(std::size_t d_, std::size_t h_, std::size_t w_, double fill = 0.0);
  Volume3D(std::size_t d_, std::size_t h_, std::size_t w_, std::vector<double> values);

  std::size_t size() const { return data.size(); }
  std::size_t slice_size() const { return h * w; }
  std::size_t index(std::size_t z, std::size_t y, std::size_t x) const { return (z * h + y) * w + x; }
  double& at(std::size_t z, std::size_t y, std::size_t x) { return data[index(z, y, x)]; }
  double at(std::size_t z, std::size_t y, std::size_t x) const { return data[index(z, y, x)]; }

  bool same_dims(const Volume3D& o) const { return d == o.d && h == o.h && w == o.w; }
  /// Throws DataError if dims are zero or the data length disagrees.
  void validate() const;
};

/// f64 scan -> binary16 payload (round to nearest even). Throws NumericError
/// on values that would overflow to infinity or are not finite.
std::vector<std::uint16_t> quantize_scan(const Volume3D& scan);

/// f64 mask -> int8 {0, 1}. Values must lie within 1e-9 of 0 or 1.
std::vector<std::int8_t> quantize_mask(const Volume3D& mask);

/// Snaps mask values to exactly 0/1 (tolerance 1e-9); throws DataError otherwise.
void binarize_mask(Volume3D& mask);

}  // namespace stripnet
