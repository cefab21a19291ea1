#include "stripnet/znorm.hpp"

#include <cmath>

#include "stripnet/errors.hpp"

namespace stripnet {

namespace {

constexpr double kMinStd = 1e-12;

template <class Select>
ZNormStats region_stats(const Volume3D& v, StatsRegion region, Select selected) {
  std::size_t n = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!selected(i)) continue;
    sum += v.data[i];
    ++n;
  }
  if (n < 2) {
    throw ZeroStdError("z-normalization region has " + std::to_string(n) + " voxel(s); at least 2 are required");
  }
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!selected(i)) continue;
    const double d = v.data[i] - mean;
    ss += d * d;
  }
  const double stddev = std::sqrt(ss / static_cast<double>(n));
  if (!(stddev > kMinStd)) {
    throw ZeroStdError("z-normalization region is constant (std = " + std::to_string(stddev) + ")");
  }
  return ZNormStats{mean, stddev, region, n};
}

}  // namespace

std::string_view to_string(StatsRegion region) {
  return region == StatsRegion::Mask ? "mask" : "nonzero";
}

ZNormStats znorm_stats(const Volume3D& volume, const Volume3D& mask) {
  volume.validate();
  if (!volume.same_dims(mask)) throw ContractViolation("znorm: mask dims differ from volume dims");
  return region_stats(volume, StatsRegion::Mask, [&](std::size_t i) { return mask.data[i] >= 0.5; });
}

ZNormStats znorm_stats(const Volume3D& volume) {
  volume.validate();
  return region_stats(volume, StatsRegion::Nonzero, [&](std::size_t i) { return volume.data[i] > 0.0; });
}

Volume3D apply_znorm(const Volume3D& volume, const ZNormStats& stats) {
  Volume3D out = volume;
  for (double& v : out.data) v = (v - stats.mean) / stats.stddev;
  out.precision = Precision::F64;
  out.history.push_back("znorm(" + std::string(to_string(stats.region)) + ")");
  return out;
}

ZNormResult znorm(const Volume3D& volume, const Volume3D& mask) {
  const ZNormStats stats = znorm_stats(volume, mask);
  return {apply_znorm(volume, stats), stats};
}

ZNormResult znorm(const Volume3D& volume) {
  const ZNormStats stats = znorm_stats(volume);
  return {apply_znorm(volume, stats), stats};
}

}  // namespace stripnet
