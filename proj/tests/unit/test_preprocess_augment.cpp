#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "stripnet/augment.hpp"
#include "stripnet/errors.hpp"
#include "stripnet/phantom.hpp"
#include "stripnet/random.hpp"
#include "stripnet/znorm.hpp"

using namespace stripnet;

namespace {
Volume3D random_volume(std::uint64_t seed, std::size_t d, std::size_t h, std::size_t w) {
  Rng rng(seed);
  Volume3D v(d, h, w);
  for (auto& x : v.data) x = rng.uniform(0.0, 1000.0);
  return v;
}

std::pair<double, double> region_moments(const Volume3D& v, const Volume3D* mask) {
  double sum = 0, n = 0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!mask || mask->data[i] == 1.0) sum += v.data[i], n += 1;
  const double mean = sum / n;
  double sq = 0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!mask || mask->data[i] == 1.0) sq += (v.data[i] - mean) * (v.data[i] - mean);
  return {mean, std::sqrt(sq / n)};
}

ScanPair stub_pair(std::uint64_t seed, std::size_t d, std::size_t h, std::size_t w) {
  ScanPair p{"stub" + std::to_string(seed), random_volume(seed, d, h, w), Volume3D(d, h, w, 1.0)};
  return p;
}

bool is_binary(const Volume3D& m) {
  return std::all_of(m.data.begin(), m.data.end(), [](double v) { return v == 0.0 || v == 1.0; });
}
}  // namespace

TEST_CASE("znorm hand example") {
  const Volume3D v(1, 1, 4, std::vector<double>{1, 2, 3, 4});
  const Volume3D all(1, 1, 4, 1.0);
  const auto r = znorm(v, all);
  CHECK(r.stats.mean == 2.5);
  CHECK(r.stats.stddev == doctest::Approx(std::sqrt(1.25)).epsilon(1e-15));
  const double expect[] = {-1.34164, -0.44721, 0.44721, 1.34164};
  for (int i = 0; i < 4; ++i) CHECK(r.volume.data[static_cast<std::size_t>(i)] == doctest::Approx(expect[i]).epsilon(1e-5));
  CHECK(r.stats.region == StatsRegion::Mask);
  CHECK(r.stats.count == 4);

  const auto mid = znorm(Volume3D(1, 1, 3, std::vector<double>{1, 2, 3}));
  CHECK(mid.volume.data[1] == 0.0);
  CHECK(mid.stats.region == StatsRegion::Nonzero);
}

TEST_CASE("znorm degenerate regions") {
  CHECK_THROWS_AS(znorm(Volume3D(2, 3, 3, 7.0)), ZeroStdError);
  CHECK_THROWS_AS(znorm(Volume3D(2, 3, 3, 7.0), Volume3D(2, 3, 3, 1.0)), ZeroStdError);
  Volume3D single(1, 1, 3, std::vector<double>{0, 0, 5});
  CHECK_THROWS_AS(znorm(single), ZeroStdError);
  CHECK_THROWS_AS(znorm(Volume3D(1, 1, 3, 0.0)), ZeroStdError);
  CHECK_THROWS_AS(znorm(Volume3D(1, 1, 3, 1.0), Volume3D(1, 1, 2, 1.0)), ContractViolation);
}

TEST_CASE("znorm region statistics") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Volume3D v = random_volume(seed, 3, 9, 11);
    Rng rng(seed + 1000);
    Volume3D mask(3, 9, 11);
    for (auto& m : mask.data) m = rng.uniform() < 0.4 ? 1.0 : 0.0;
    mask.data[0] = 1.0;
    mask.data[1] = 1.0;

    const auto masked = znorm(v, mask);
    const auto [mm, ms] = region_moments(masked.volume, &mask);
    CHECK(std::abs(mm) < 1e-6);
    CHECK(std::abs(ms - 1.0) < 1e-6);

    for (std::size_t i = 0; i < v.size(); i += 3) v.data[i] = 0.0;
    const auto nz = znorm(v);
    Volume3D region(3, 9, 11);
    for (std::size_t i = 0; i < v.size(); ++i) region.data[i] = v.data[i] > 0 ? 1.0 : 0.0;
    const auto [nm, ns] = region_moments(nz.volume, &region);
    CHECK(std::abs(nm) < 1e-6);
    CHECK(std::abs(ns - 1.0) < 1e-6);
  }
}

TEST_CASE("identity and flips") {
  const auto p = stub_pair(3, 2, 10, 12);
  const auto id = apply_transform(p.scan, p.mask, TransformSpec{});
  CHECK(id.scan.data == p.scan.data);
  CHECK(id.mask.data == p.mask.data);

  for (int axis : {0, 1}) {
    TransformSpec twice;
    twice.steps = {Flip{axis}, Flip{axis}};
    CHECK(apply_transform(p.scan, p.mask, twice).scan.data == p.scan.data);
    TransformSpec once;
    once.steps = {Flip{axis}};
    const auto f = apply_transform(p.scan, p.mask, once);
    CHECK(f.scan.data != p.scan.data);
    CHECK(apply_transform(f.scan, f.mask, once).scan.data == p.scan.data);
  }
  TransformSpec cols;
  cols.steps = {Flip{1}};
  const auto f = apply_transform(p.scan, p.mask, cols);
  CHECK(f.scan.at(1, 2, 0) == p.scan.at(1, 2, 11));
}

TEST_CASE("rotation of a delta spike") {
  const std::size_t n = 33;
  Volume3D scan(1, n, n), mask(1, n, n);
  scan.at(0, 16, 26) = 1.0;
  mask.at(0, 16, 26) = 1.0;
  TransformSpec spec;
  spec.steps = {Rotate{10.0}};
  const auto r = apply_transform(scan, mask, spec);

  // Offset (dy, dx) = (0, 10) from the centre rotated by 10 degrees.
  const double th = 10.0 * std::numbers::pi / 180.0;
  const double y = 16.0 + 10.0 * std::sin(th), x = 16.0 + 10.0 * std::cos(th);
  CHECK(y == doctest::Approx(17.7365).epsilon(1e-4));
  CHECK(x == doctest::Approx(25.8481).epsilon(1e-4));
  const auto peak = std::max_element(r.scan.data.begin(), r.scan.data.end()) - r.scan.data.begin();
  CHECK(static_cast<std::size_t>(peak) == static_cast<std::size_t>(std::lround(y)) * n + static_cast<std::size_t>(std::lround(x)));
  CHECK(r.mask.at(0, 18, 26) == 1.0);
  CHECK(r.mask.at(0, 16, 26) == 0.0);

  TransformSpec bad;
  bad.steps = {Rotate{90.0}};
  CHECK_THROWS_AS(apply_transform(scan, mask, bad), ConfigError);
}

TEST_CASE("translation zero-fills") {
  Volume3D scan(1, 6, 6, 1.0), mask(1, 6, 6, 1.0);
  TransformSpec spec;
  spec.steps = {Translate{0.0, 2.0}};
  const auto t = apply_transform(scan, mask, spec);
  CHECK(t.scan.at(0, 3, 0) == 0.0);
  CHECK(t.scan.at(0, 3, 1) == 0.0);
  CHECK(t.scan.at(0, 3, 2) == 1.0);
  CHECK(t.mask.at(0, 3, 1) == 0.0);
  CHECK(t.mask.at(0, 3, 5) == 1.0);
}

TEST_CASE("parameter ranges") {
  auto rejects = [](TransformStep s) {
    TransformSpec spec;
    spec.steps = {s};
    CHECK_THROWS_AS(spec.validate(), ConfigError);
  };
  rejects(Rotate{-10.5});
  rejects(Translate{12.5, 0});
  rejects(Scale{1.2});
  rejects(Flip{2});
  rejects(Gamma{0.7});
  rejects(GaussianNoise{0.2});
  rejects(BiasGradient{0.3, 0});
}

TEST_CASE("random transforms preserve dims and binary masks") {
  auto p = stub_pair(9, 2, 24, 20);
  const auto ph = make_phantom_slice(24, 20, 9);
  for (std::size_t i = 0; i < 2 * 24 * 20; ++i) p.mask.data[i] = ph.mask[i % (24 * 20)];
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const TransformSpec spec = draw_transform(seed);
    CHECK_NOTHROW(spec.validate());
    CHECK(transform_from_json(transform_to_json(spec)).steps.size() == spec.steps.size());
    CHECK(transform_to_json(transform_from_json(transform_to_json(spec))) == transform_to_json(spec));
    const auto t = apply_transform(p.scan, p.mask, spec);
    CHECK(t.scan.same_dims(p.scan));
    CHECK(t.mask.same_dims(p.mask));
    CHECK(is_binary(t.mask));
    const auto again = apply_transform(p.scan, p.mask, spec);
    CHECK(again.scan.data == t.scan.data);
    CHECK(again.mask.data == t.mask.data);
  }
}

TEST_CASE("expansion counts and copy zero") {
  std::vector<ScanPair> scans;
  for (std::uint64_t s = 0; s < 110; ++s) scans.push_back(stub_pair(s, 192, 2, 2));
  const auto out = expand_dataset(scans, 5, 17);
  CHECK(out.size() == 550);
  std::size_t slices = 0;
  for (const auto& a : out) slices += extract_slices(a.scan, a.id).size();
  CHECK(slices == 105'600);

  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(out[i * 5].copy == 0);
    CHECK(out[i * 5].spec.is_identity());
    CHECK(out[i * 5].scan.data == znorm(scans[i].scan, scans[i].mask).volume.data);
    CHECK(out[i * 5 + 3].source_index == i);
    CHECK_FALSE(out[i * 5 + 3].spec.is_identity());
  }

  std::vector<ScanPair> few(scans.begin(), scans.begin() + 3);
  for (std::size_t factor = 1; factor <= 8; ++factor) CHECK(expand_dataset(few, factor, 1).size() == 3 * factor);
  for (const auto& a : expand_dataset(few, 1, 1)) CHECK(a.spec.is_identity());
  CHECK_THROWS_AS(expand_dataset({}, 5, 1), DataError);
  CHECK_THROWS_AS(expand_dataset(few, 0, 1), ConfigError);
}

TEST_CASE("expansion is deterministic per seed") {
  std::vector<ScanPair> scans{stub_pair(1, 3, 16, 16), stub_pair(2, 3, 16, 16)};
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const auto a = expand_dataset(scans, 4, seed);
    const auto b = expand_dataset(scans, 4, seed);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].scan.data == b[i].scan.data);
      CHECK(a[i].mask.data == b[i].mask.data);
      CHECK(transform_to_json(a[i].spec) == transform_to_json(b[i].spec));
    }
  }
  CHECK(expand_dataset(scans, 4, 0)[1].scan.data != expand_dataset(scans, 4, 1)[1].scan.data);
}

TEST_CASE("slice extraction") {
  Volume3D big(192, 256, 256);
  for (std::size_t i = 0; i < big.size(); i += 4099) big.data[i] = static_cast<double>(i);
  const auto slices = extract_slices(big, "scan");
  CHECK(slices.size() == 192);
  CHECK(slices[191].h == 256);
  CHECK(slices[191].w == 256);
  CHECK(slices[57].index == 57);
  CHECK(slices[57].scan_id == "scan");
  CHECK(stack_slices(slices).data == big.data);

  const Volume3D one = random_volume(4, 1, 4, 4);
  const auto s = extract_slices(one);
  CHECK(s.size() == 1);
  CHECK(s[0].values == one.data);
}
