#pragma once

// Synthetic head phantoms: an elliptical "brain" surrounded by a dark CSF
// band and a bright skull shell on a zero background.

#include <cstdint>
#include <string>
#include <vector>

#include "stripnet/augment.hpp"

namespace stripnet {

struct PhantomSlice {
  std::size_t h = 0;
  std::size_t w = 0;
  /// Raw intensities, roughly in [0, 1000].
  std::vector<double> image;
  /// 1 inside the brain ellipse, else 0.
  std::vector<double> mask;
};

/// One slice with seeded ellipse geometry, orientation and noise.
PhantomSlice make_phantom_slice(std::size_t h, std::size_t w, std::uint64_t seed);

/// A (d, h, w) head: an ellipsoidal brain inside a skull shell.
ScanPair make_phantom_scan(std::size_t d, std::size_t h, std::size_t w, std::uint64_t seed, std::string id = "phantom");

}  // namespace stripnet
