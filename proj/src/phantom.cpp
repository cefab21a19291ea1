#include "stripnet/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "stripnet/errors.hpp"
#include "stripnet/random.hpp"

namespace stripnet {

namespace {
struct Ellipse {
  double cy, cx, ry, rx, angle;

  /// Normalized radius: < 1 inside.
  double radius(double y, double x) const {
    const double c = std::cos(angle), s = std::sin(angle);
    const double dy = y - cy, dx = x - cx;
    const double u = (c * dx + s * dy) / rx;
    const double v = (-s * dx + c * dy) / ry;
    return std::sqrt(u * u + v * v);
  }
};

Ellipse draw_ellipse(Rng& rng, std::size_t h, std::size_t w) {
  const double H = static_cast<double>(h), W = static_cast<double>(w);
  Ellipse e;
  e.cy = (H - 1) / 2 + rng.uniform(-0.05, 0.05) * H;
  e.cx = (W - 1) / 2 + rng.uniform(-0.05, 0.05) * W;
  e.ry = rng.uniform(0.24, 0.32) * H;
  e.rx = rng.uniform(0.20, 0.28) * W;
  e.angle = rng.uniform(-0.3, 0.3);
  return e;
}

void render(const Ellipse& brain, double scale, Rng& rng, std::size_t h, std::size_t w, double* image,
            double* mask) {
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      const double r = scale > 0 ? brain.radius(static_cast<double>(y), static_cast<double>(x)) / scale
                                 : std::numeric_limits<double>::infinity();
      double v = 0.0;
      mask[i] = 0.0;
      if (r < 1.0) {
        v = 550.0 + 80.0 * std::cos(3.0 * r) + rng.normal(0.0, 25.0);
        mask[i] = 1.0;
      } else if (r < 1.12) {
        v = 150.0 + rng.normal(0.0, 20.0);
      } else if (r < 1.32) {
        v = 950.0 + rng.normal(0.0, 30.0);
      } else if (r < 1.42) {
        v = 300.0 + rng.normal(0.0, 20.0);
      }
      image[i] = std::max(v, 0.0);
    }
  }
}
}  // namespace

PhantomSlice make_phantom_slice(std::size_t h, std::size_t w, std::uint64_t seed) {
  if (h < 8 || w < 8) throw ConfigError("phantom slices need at least 8x8 pixels");
  Rng rng(mix_seed(seed, 0x70686e74ULL));
  PhantomSlice s{h, w, std::vector<double>(h * w), std::vector<double>(h * w)};
  const Ellipse brain = draw_ellipse(rng, h, w);
  render(brain, 1.0, rng, h, w, s.image.data(), s.mask.data());
  return s;
}

ScanPair make_phantom_scan(std::size_t d, std::size_t h, std::size_t w, std::uint64_t seed, std::string id) {
  if (d == 0 || h < 8 || w < 8) throw ConfigError("phantom volumes need d >= 1 and at least 8x8 slices");
  Rng rng(mix_seed(seed, 0x766f6cULL));
  const Ellipse brain = draw_ellipse(rng, h, w);
  const double cz = (static_cast<double>(d) - 1) / 2;
  const double rz = std::max(0.42 * static_cast<double>(d), 0.5);

  ScanPair pair{std::move(id), Volume3D{}, Volume3D{}};
  for (Volume3D* v : {&pair.scan, &pair.mask}) {
    v->d = d;
    v->h = h;
    v->w = w;
    v->precision = Precision::F64;
    v->data.assign(d * h * w, 0.0);
    v->source = "phantom:" + std::to_string(seed);
  }
  for (std::size_t z = 0; z < d; ++z) {
    const double t = (static_cast<double>(z) - cz) / rz;
    const double scale = d == 1 ? 1.0 : (t * t < 1.0 ? std::sqrt(1.0 - t * t) : 0.0);
    render(brain, scale, rng, h, w, pair.scan.data.data() + z * h * w, pair.mask.data.data() + z * h * w);
  }
  return pair;
}

}  // namespace stripnet
