#include "stripnet/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "json.hpp"
#include "stripnet/errors.hpp"
#include "stripnet/random.hpp"

namespace stripnet {

namespace {

using nlohmann::json;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void check_range(double v, double lo, double hi, const char* what) {
  if (!(v >= lo && v <= hi)) {
    throw ConfigError(std::string(what) + " = " + std::to_string(v) + " outside [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + "]");
  }
}

double radians(double degrees) { return degrees * std::numbers::pi / 180.0; }

// q = A p + b in (y, x) coordinates.
struct Affine {
  double a00 = 1, a01 = 0, a10 = 0, a11 = 1;
  double b0 = 0, b1 = 0;

  // Linear map about the centre c: q = M (p - c) + c.
  static Affine about(double m00, double m01, double m10, double m11, double cy, double cx) {
    return Affine{m00, m01, m10, m11, cy - (m00 * cy + m01 * cx), cx - (m10 * cy + m11 * cx)};
  }

  Affine then(const Affine& next) const {
    return Affine{next.a00 * a00 + next.a01 * a10, next.a00 * a01 + next.a01 * a11,
                  next.a10 * a00 + next.a11 * a10, next.a10 * a01 + next.a11 * a11,
                  next.a00 * b0 + next.a01 * b1 + next.b0, next.a10 * b0 + next.a11 * b1 + next.b1};
  }

  Affine inverse() const {
    const double det = a00 * a11 - a01 * a10;
    const double i00 = a11 / det, i01 = -a01 / det, i10 = -a10 / det, i11 = a00 / det;
    return Affine{i00, i01, i10, i11, -(i00 * b0 + i01 * b1), -(i10 * b0 + i11 * b1)};
  }
};

Affine step_affine(const TransformStep& step, std::size_t h, std::size_t w) {
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  return std::visit(
      Overloaded{
          [&](const Rotate& r) {
            const double c = std::cos(radians(r.degrees)), s = std::sin(radians(r.degrees));
            // x' = c x - s y, y' = s x + c y (offsets from the centre).
            return Affine::about(c, s, -s, c, cy, cx);
          },
          [&](const Translate& t) { return Affine{1, 0, 0, 1, t.dy, t.dx}; },
          [&](const Scale& s) { return Affine::about(s.factor, 0, 0, s.factor, cy, cx); },
          [&](const Flip& f) {
            return f.axis == 0 ? Affine::about(-1, 0, 0, 1, cy, cx) : Affine::about(1, 0, 0, -1, cy, cx);
          },
          [](const auto&) { return Affine{}; },
      },
      step);
}

double sample_bilinear(const double* plane, std::size_t h, std::size_t w, double sy, double sx) {
  const double fy0 = std::floor(sy), fx0 = std::floor(sx);
  const double fy = sy - fy0, fx = sx - fx0;
  const auto y0 = static_cast<long long>(fy0), x0 = static_cast<long long>(fx0);
  auto at = [&](long long y, long long x) -> double {
    if (y < 0 || x < 0 || y >= static_cast<long long>(h) || x >= static_cast<long long>(w)) return 0.0;
    return plane[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
  };
  if (fy == 0.0 && fx == 0.0) return at(y0, x0);
  return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) + fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
}

double sample_nearest(const double* plane, std::size_t h, std::size_t w, double sy, double sx) {
  const auto y = static_cast<long long>(std::floor(sy + 0.5));
  const auto x = static_cast<long long>(std::floor(sx + 0.5));
  if (y < 0 || x < 0 || y >= static_cast<long long>(h) || x >= static_cast<long long>(w)) return 0.0;
  return plane[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
}

// Normalized coordinate along the ramp direction, in [-1, 1].
std::vector<double> ramp(std::size_t h, std::size_t w, double direction_degrees) {
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  const double sy = std::sin(radians(direction_degrees)), sx = std::cos(radians(direction_degrees));
  const double extent = std::abs(cy * sy) + std::abs(cx * sx);
  std::vector<double> t(h * w, 0.0);
  if (extent == 0.0) return t;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      t[y * w + x] = ((static_cast<double>(y) - cy) * sy + (static_cast<double>(x) - cx) * sx) / extent;
    }
  }
  return t;
}

json step_to_json(const TransformStep& step) {
  return std::visit(Overloaded{
                        [](const Rotate& r) { return json{{"op", "rotate"}, {"degrees", r.degrees}}; },
                        [](const Translate& t) { return json{{"op", "translate"}, {"dy", t.dy}, {"dx", t.dx}}; },
                        [](const Scale& s) { return json{{"op", "scale"}, {"factor", s.factor}}; },
                        [](const Flip& f) { return json{{"op", "flip"}, {"axis", f.axis}}; },
                        [](const Gamma& g) { return json{{"op", "gamma"}, {"gamma", g.gamma}}; },
                        [](const GaussianNoise& n) { return json{{"op", "gaussian_noise"}, {"sigma", n.sigma}}; },
                        [](const BiasGradient& b) {
                          return json{{"op", "bias_gradient"},
                                      {"amplitude", b.amplitude},
                                      {"direction_degrees", b.direction_degrees}};
                        },
                    },
                    step);
}

TransformStep step_from_json(const json& j) {
  const std::string op = j.at("op").get<std::string>();
  if (op == "rotate") return Rotate{j.at("degrees").get<double>()};
  if (op == "translate") return Translate{j.at("dy").get<double>(), j.at("dx").get<double>()};
  if (op == "scale") return Scale{j.at("factor").get<double>()};
  if (op == "flip") return Flip{j.at("axis").get<int>()};
  if (op == "gamma") return Gamma{j.at("gamma").get<double>()};
  if (op == "gaussian_noise") return GaussianNoise{j.at("sigma").get<double>()};
  if (op == "bias_gradient") return BiasGradient{j.at("amplitude").get<double>(), j.at("direction_degrees").get<double>()};
  throw ConfigError("unknown transform op '" + op + "'");
}

}  // namespace

bool is_spatial(const TransformStep& step) {
  return std::holds_alternative<Rotate>(step) || std::holds_alternative<Translate>(step) ||
         std::holds_alternative<Scale>(step) || std::holds_alternative<Flip>(step);
}

void TransformSpec::validate() const {
  for (const TransformStep& step : steps) {
    std::visit(Overloaded{
                   [](const Rotate& r) { check_range(r.degrees, -10.0, 10.0, "rotate.degrees"); },
                   [](const Translate& t) {
                     check_range(t.dy, -12.0, 12.0, "translate.dy");
                     check_range(t.dx, -12.0, 12.0, "translate.dx");
                   },
                   [](const Scale& s) { check_range(s.factor, 0.9, 1.1, "scale.factor"); },
                   [](const Flip& f) {
                     if (f.axis != 0 && f.axis != 1) throw ConfigError("flip.axis must be 0 or 1");
                   },
                   [](const Gamma& g) { check_range(g.gamma, 0.8, 1.25, "gamma.gamma"); },
                   [](const GaussianNoise& n) { check_range(n.sigma, 0.0, 0.1, "gaussian_noise.sigma"); },
                   [](const BiasGradient& b) {
                     check_range(b.amplitude, 0.0, 0.2, "bias_gradient.amplitude");
                     if (!std::isfinite(b.direction_degrees)) throw ConfigError("bias_gradient.direction_degrees");
                   },
               },
               step);
  }
}

std::string transform_to_json(const TransformSpec& spec) {
  json steps = json::array();
  for (const TransformStep& s : spec.steps) steps.push_back(step_to_json(s));
  json j{{"order", json::array({"znorm", "spatial", "intensity"})}, {"seed", spec.seed}, {"steps", steps}};
  return j.dump(2);
}

TransformSpec transform_from_json(std::string_view text) {
  TransformSpec spec;
  try {
    const json j = json::parse(text);
    spec.seed = j.at("seed").get<std::uint64_t>();
    for (const json& s : j.at("steps")) spec.steps.push_back(step_from_json(s));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("transform sidecar: ") + e.what());
  }
  spec.validate();
  return spec;
}

TransformSpec draw_transform(std::uint64_t seed) {
  Rng rng(seed);
  TransformSpec spec;
  if (rng.uniform() < 0.5) spec.steps.push_back(Flip{1});
  spec.steps.push_back(Rotate{rng.uniform(-10.0, 10.0)});
  spec.steps.push_back(Scale{rng.uniform(0.9, 1.1)});
  spec.steps.push_back(Translate{rng.uniform(-12.0, 12.0), rng.uniform(-12.0, 12.0)});
  spec.steps.push_back(Gamma{std::exp(rng.uniform(std::log(0.8), std::log(1.25)))});
  spec.steps.push_back(BiasGradient{rng.uniform(0.0, 0.2), rng.uniform(0.0, 360.0)});
  spec.steps.push_back(GaussianNoise{rng.uniform(0.0, 0.1)});
  spec.seed = rng.next_u64();
  spec.validate();
  return spec;
}

TransformedPair apply_transform(const Volume3D& scan, const Volume3D& mask, const TransformSpec& spec) {
  if (!scan.same_dims(mask)) throw ContractViolation("apply_transform: scan and mask dims differ");
  spec.validate();
  TransformedPair out{scan, mask};
  if (spec.is_identity()) return out;

  const std::size_t h = scan.h, w = scan.w, plane = h * w;
  bool any_spatial = false;
  Affine forward;
  for (const TransformStep& step : spec.steps) {
    if (!is_spatial(step)) continue;
    any_spatial = true;
    forward = forward.then(step_affine(step, h, w));
  }
  if (any_spatial) {
    const Affine inv = forward.inverse();
    for (std::size_t z = 0; z < scan.d; ++z) {
      const double* src_scan = scan.data.data() + z * plane;
      const double* src_mask = mask.data.data() + z * plane;
      double* dst_scan = out.scan.data.data() + z * plane;
      double* dst_mask = out.mask.data.data() + z * plane;
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const double qy = static_cast<double>(y), qx = static_cast<double>(x);
          const double sy = inv.a00 * qy + inv.a01 * qx + inv.b0;
          const double sx = inv.a10 * qy + inv.a11 * qx + inv.b1;
          dst_scan[y * w + x] = sample_bilinear(src_scan, h, w, sy, sx);
          dst_mask[y * w + x] = sample_nearest(src_mask, h, w, sy, sx) >= 0.5 ? 1.0 : 0.0;
        }
      }
    }
  }

  Rng noise(spec.seed);
  for (const TransformStep& step : spec.steps) {
    if (is_spatial(step)) continue;
    std::visit(Overloaded{
                   [&](const Gamma& g) {
                     const auto [lo_it, hi_it] = std::minmax_element(out.scan.data.begin(), out.scan.data.end());
                     const double lo = *lo_it, hi = *hi_it;
                     if (!(hi > lo)) return;
                     for (double& v : out.scan.data) v = lo + (hi - lo) * std::pow((v - lo) / (hi - lo), g.gamma);
                   },
                   [&](const GaussianNoise& n) {
                     if (n.sigma == 0.0) return;
                     for (double& v : out.scan.data) v += n.sigma * noise.normal();
                   },
                   [&](const BiasGradient& b) {
                     const std::vector<double> t = ramp(h, w, b.direction_degrees);
                     for (std::size_t z = 0; z < scan.d; ++z) {
                       double* s = out.scan.data.data() + z * plane;
                       for (std::size_t i = 0; i < plane; ++i) s[i] *= 1.0 + b.amplitude * t[i];
                     }
                   },
                   [](const auto&) {},
               },
               step);
  }
  out.scan.history.push_back("transform(seed=" + std::to_string(spec.seed) + ")");
  out.mask.history.push_back("transform(seed=" + std::to_string(spec.seed) + ")");
  return out;
}

TransformSpec AugmentationPlan::spec_for(std::size_t scan_index, std::size_t copy) const {
  if (factor == 0) throw ConfigError("augmentation factor must be at least 1");
  if (copy >= factor) throw ContractViolation("copy index beyond augmentation factor");
  if (copy == 0) return TransformSpec{};
  return draw_transform(mix_seed(mix_seed(master_seed, scan_index), copy));
}

std::vector<AugmentedScan> expand_scan(const ScanPair& pair, std::size_t scan_index, const AugmentationPlan& plan) {
  if (plan.factor == 0) throw ConfigError("augmentation factor must be at least 1");
  Volume3D mask = pair.mask;
  binarize_mask(mask);
  const ZNormResult normed = znorm(pair.scan, mask);
  std::vector<AugmentedScan> out;
  out.reserve(plan.factor);
  for (std::size_t copy = 0; copy < plan.factor; ++copy) {
    TransformSpec spec = plan.spec_for(scan_index, copy);
    TransformedPair t = apply_transform(normed.volume, mask, spec);
    out.push_back(AugmentedScan{pair.id, scan_index, copy, std::move(spec), normed.stats, std::move(t.scan),
                                std::move(t.mask)});
  }
  return out;
}

std::vector<AugmentedScan> expand_dataset(const std::vector<ScanPair>& scans, std::size_t factor, std::uint64_t seed) {
  if (scans.empty()) throw DataError("expand_dataset: no input scans");
  const AugmentationPlan plan{factor, seed};
  std::vector<AugmentedScan> out;
  out.reserve(scans.size() * factor);
  for (std::size_t i = 0; i < scans.size(); ++i) {
    auto copies = expand_scan(scans[i], i, plan);
    std::move(copies.begin(), copies.end(), std::back_inserter(out));
  }
  return out;
}

std::vector<Slice2D> extract_slices(const Volume3D& volume, std::string_view scan_id) {
  volume.validate();
  std::vector<Slice2D> slices;
  slices.reserve(volume.d);
  const std::size_t plane = volume.slice_size();
  for (std::size_t z = 0; z < volume.d; ++z) {
    const auto first = volume.data.begin() + static_cast<std::ptrdiff_t>(z * plane);
    slices.push_back(Slice2D{std::string(scan_id), z, volume.h, volume.w,
                             std::vector<double>(first, first + static_cast<std::ptrdiff_t>(plane))});
  }
  return slices;
}

Volume3D stack_slices(const std::vector<Slice2D>& slices) {
  if (slices.empty()) throw DataError("stack_slices: no slices");
  const std::size_t h = slices.front().h, w = slices.front().w;
  std::vector<double> data;
  data.reserve(slices.size() * h * w);
  for (const Slice2D& s : slices) {
    if (s.h != h || s.w != w || s.values.size() != h * w) throw DataError("stack_slices: inconsistent slice dims");
    data.insert(data.end(), s.values.begin(), s.values.end());
  }
  return Volume3D(slices.size(), h, w, std::move(data));
}

}  // namespace stripnet
