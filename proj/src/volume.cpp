#include "stripnet/volume.hpp"

#include <cmath>

#include "stripnet/errors.hpp"
#include "stripnet/half.hpp"

namespace stripnet {

namespace {
constexpr double kMaskSnap = 1e-9;

std::int8_t snap(double v, std::size_t i) {
  if (std::abs(v) <= kMaskSnap) return 0;
  if (std::abs(v - 1.0) <= kMaskSnap) return 1;
  throw DataError("mask value " + std::to_string(v) + " at voxel " + std::to_string(i) + " is not binary");
}
}  // namespace

std::string_view to_string(Precision p) {
  switch (p) {
    case Precision::F64: return "f64";
    case Precision::F32: return "f32";
    case Precision::F16: return "f16";
    case Precision::I16: return "i16";
    case Precision::I8: return "i8";
    case Precision::U8: return "u8";
  }
  return "?";
}

Volume3D::Volume3D(std::size_t d_, std::size_t h_, std::size_t w_, double fill)
    : d(d_), h(h_), w(w_), data(d_ * h_ * w_, fill) {
  validate();
}

Volume3D::Volume3D(std::size_t d_, std::size_t h_, std::size_t w_, std::vector<double> values)
    : d(d_), h(h_), w(w_), data(std::move(values)) {
  validate();
}

void Volume3D::validate() const {
  if (d == 0 || h == 0 || w == 0) throw DataError("volume dims must be positive");
  if (data.size() != d * h * w) {
    throw DataError("volume data length " + std::to_string(data.size()) + " != " + std::to_string(d) + "x" +
                    std::to_string(h) + "x" + std::to_string(w));
  }
}

std::vector<std::uint16_t> quantize_scan(const Volume3D& scan) {
  std::vector<std::uint16_t> out(scan.size());
  for (std::size_t i = 0; i < scan.size(); ++i) {
    const double v = scan.data[i];
    out[i] = double_to_half_bits(v);
    if (!half_is_finite(out[i])) {
      throw NumericError("value " + std::to_string(v) + " at voxel " + std::to_string(i) +
                         " is not representable as float16");
    }
  }
  return out;
}

std::vector<std::int8_t> quantize_mask(const Volume3D& mask) {
  std::vector<std::int8_t> out(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = snap(mask.data[i], i);
  return out;
}

void binarize_mask(Volume3D& mask) {
  for (std::size_t i = 0; i < mask.size(); ++i) mask.data[i] = snap(mask.data[i], i);
}

}  // namespace stripnet
