#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <thread>

#include "doctest.h"
#include "stripnet/errors.hpp"
#include "stripnet/half.hpp"
#include "stripnet/nifti.hpp"
#include "stripnet/npy.hpp"
#include "stripnet/random.hpp"
#include "stripnet/volume_store.hpp"

using namespace stripnet;
namespace fs = std::filesystem;

namespace {
const fs::path kFixtures = STRIPNET_FIXTURES;

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

FormatErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const FormatError& e) {
    return e.kind();
  }
  FAIL("no FormatError raised");
  return FormatErrorKind::Io;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};
}  // namespace

TEST_CASE("nifti fixtures parse to the hand-checked voxels") {
  for (const char* name : {"nifti_f32_le.nii", "nifti_f32_be.nii", "nifti_f64_le.nii", "nifti_u8_le.nii"}) {
    CAPTURE(name);
    const Volume3D v = read_nifti(kFixtures / name);
    REQUIRE(v.d == 4);
    REQUIRE(v.h == 4);
    REQUIRE(v.w == 4);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t k = 0; k < 4; ++k) CHECK(v.at(i, j, k) == static_cast<double>(i + 4 * j + 16 * k));
  }
  CHECK(read_nifti(kFixtures / "nifti_f32_le.nii").data == read_nifti(kFixtures / "nifti_f32_be.nii").data);
  CHECK(read_nifti(kFixtures / "nifti_f32_le.nii").precision == Precision::F32);
  CHECK(read_nifti(kFixtures / "nifti_u8_le.nii").precision == Precision::U8);

  const Volume3D scaled = read_nifti(kFixtures / "nifti_i16_scaled.nii");
  REQUIRE(scaled.size() == 8);
  // Voxel with stored value 3 sits at file position 3: i = 1, j = 1, k = 0.
  CHECK(scaled.at(1, 1, 0) == 7.0);
  CHECK(scaled.at(0, 0, 0) == 1.0);
  CHECK(scaled.at(1, 1, 1) == 15.0);
}

TEST_CASE("nifti rejections are distinct") {
  CHECK(kind_of([] { read_nifti(kFixtures / "nifti_bad_magic.nii"); }) == FormatErrorKind::BadMagic);
  CHECK(kind_of([] { read_nifti(kFixtures / "nifti_bad_sizeof.nii"); }) == FormatErrorKind::BadHeader);
  CHECK(kind_of([] { read_nifti(kFixtures / "nifti_truncated.nii"); }) == FormatErrorKind::Truncated);
  CHECK(kind_of([] { read_nifti(kFixtures / "nifti_bad_datatype.nii"); }) == FormatErrorKind::UnsupportedDatatype);
  CHECK(kind_of([] { read_nifti(kFixtures / "missing.nii"); }) == FormatErrorKind::Io);
}

TEST_CASE("nifti write and read is byte-order invariant") {
  Rng rng(11);
  Volume3D v(3, 5, 7);
  for (auto& x : v.data) x = static_cast<float>(rng.normal());
  NiftiWriteOptions le, be;
  be.big_endian = true;
  const auto a = read_nifti(write_nifti(v, le));
  const auto b = read_nifti(write_nifti(v, be));
  CHECK(a.data == v.data);
  CHECK(b.data == v.data);
  CHECK(write_nifti(v, le) != write_nifti(v, be));
}

TEST_CASE("npy golden fixtures are byte identical") {
  for (const char* name : {"golden_f32_2x2.npy", "golden_f64_scalar.npy", "golden_f16_3.npy", "golden_i8_2x3.npy",
                           "golden_u8_4.npy", "golden_i16_1x2x2.npy", "golden_f32_wide.npy"}) {
    CAPTURE(name);
    const auto bytes = read_bytes(kFixtures / name);
    const NpyRecord r = read_npy(bytes);
    CHECK(write_npy(r) == bytes);
  }
  const float f[] = {1, 2, 3, 4};
  CHECK(write_npy(make_npy<float>({2, 2}, f)) == read_bytes(kFixtures / "golden_f32_2x2.npy"));
  CHECK(read_bytes(kFixtures / "golden_f32_2x2.npy").size() == 144);

  const NpyRecord scalar = read_npy(read_bytes(kFixtures / "golden_f64_scalar.npy"));
  CHECK(scalar.shape.empty());
  CHECK(scalar.count() == 1);
  CHECK(npy_to_doubles(scalar) == std::vector<double>{2.5});

  CHECK(npy_to_doubles(load_npy(kFixtures / "golden_f16_3.npy")) == std::vector<double>{0.0, 1.0, -65504.0});
  CHECK(npy_to_doubles(load_npy(kFixtures / "golden_i8_2x3.npy")) == std::vector<double>{0, 1, -1, 127, -128, 5});
  const auto wide = load_npy_header(kFixtures / "golden_f32_wide.npy");
  CHECK(wide.shape == std::vector<std::size_t>{3, 17, 1000});
  CHECK(wide.data_offset % 64 == 0);
}

TEST_CASE("npy rejections") {
  CHECK(kind_of([] { load_npy(kFixtures / "fortran_f32_2x3.npy"); }) == FormatErrorKind::UnsupportedLayout);
  CHECK(kind_of([] { load_npy(kFixtures / "bigendian_f4_2.npy"); }) == FormatErrorKind::UnsupportedDatatype);
  auto bytes = read_bytes(kFixtures / "golden_f32_2x2.npy");
  auto bad = bytes;
  bad[1] = 'X';
  CHECK(kind_of([&] { read_npy(bad); }) == FormatErrorKind::BadMagic);
  auto shortened = std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 4);
  CHECK(kind_of([&] { read_npy(shortened); }) == FormatErrorKind::LengthMismatch);
  auto garbled = bytes;
  const std::string text(garbled.begin(), garbled.end());
  garbled[text.find("descr")] = 'X';
  CHECK(kind_of([&] { read_npy(garbled); }) == FormatErrorKind::BadHeader);

  NpyRecord r;
  r.dtype = Precision::F32;
  r.shape = {2, 2};
  r.data.resize(12);
  CHECK(kind_of([&] { write_npy(r); }) == FormatErrorKind::LengthMismatch);
}

TEST_CASE("npy round trip is bitwise over random arrays") {
  const Precision dtypes[] = {Precision::F64, Precision::F32, Precision::F16, Precision::I16, Precision::I8, Precision::U8};
  Rng rng(2024);
  for (int trial = 0; trial < 1200; ++trial) {
    NpyRecord r;
    r.dtype = dtypes[rng.below(6)];
    const std::size_t rank = rng.below(5);
    for (std::size_t i = 0; i < rank; ++i) r.shape.push_back(rng.below(7));
    r.data.resize(r.count() * element_size(r.dtype));
    for (auto& b : r.data) b = static_cast<std::uint8_t>(rng.below(256));
    const auto bytes = write_npy(r);
    CHECK(read_npy_header(bytes).data_offset % 64 == 0);
    CHECK(bytes[read_npy_header(bytes).data_offset - 1] == '\n');
    const NpyRecord back = read_npy(bytes);
    CHECK(back == r);
    CHECK(write_npy(back) == bytes);
  }
}

TEST_CASE("binary16 encoding") {
  CHECK(double_to_half_bits(0.0) == 0x0000);
  CHECK(double_to_half_bits(-0.0) == 0x8000);
  CHECK(double_to_half_bits(1.0) == 0x3C00);
  CHECK(double_to_half_bits(-2.0) == 0xC000);
  CHECK(double_to_half_bits(65504.0) == 0x7BFF);
  CHECK(double_to_half_bits(65520.0) == 0x7C00);
  CHECK(double_to_half_bits(std::ldexp(1.0, -24)) == 0x0001);
  CHECK(double_to_half_bits(std::ldexp(1.0, -14)) == 0x0400);
  // Ties round to even.
  CHECK(double_to_half_bits(1.0 + std::ldexp(1.0, -11)) == 0x3C00);
  CHECK(double_to_half_bits(1.0 + 3 * std::ldexp(1.0, -11)) == 0x3C02);
  CHECK(std::isnan(half_bits_to_double(double_to_half_bits(std::nan("")))));
  CHECK_FALSE(half_is_finite(0x7C00));

  for (std::uint32_t b = 0; b < 0x10000; ++b) {
    const auto bits = static_cast<std::uint16_t>(b);
    if (!half_is_finite(bits)) continue;
    CHECK(double_to_half_bits(half_bits_to_double(bits)) == bits);
  }

  Rng rng(5);
  for (int i = 0; i < 100000; ++i) {
    const double x = std::ldexp(rng.uniform(-1.0, 1.0), static_cast<int>(rng.below(30)) - 14);
    const double back = half_bits_to_double(double_to_half_bits(x));
    CHECK(std::abs(back - x) <= std::ldexp(std::abs(x), -11) + std::ldexp(1.0, -24));
  }
}

TEST_CASE("scan and mask quantization") {
  Volume3D scan(1, 1, 3, std::vector<double>{0.0, 1.0, -3.5});
  CHECK(quantize_scan(scan) == std::vector<std::uint16_t>{0x0000, 0x3C00, 0xC300});
  scan.data[2] = 1e6;
  CHECK_THROWS_AS(quantize_scan(scan), NumericError);
  scan.data[2] = std::nan("");
  CHECK_THROWS_AS(quantize_scan(scan), NumericError);

  Volume3D mask(1, 1, 4, std::vector<double>{0.0, 1.0, 1.0 - 1e-12, 1e-10});
  CHECK(quantize_mask(mask) == std::vector<std::int8_t>{0, 1, 1, 0});
  mask.data[0] = 0.5;
  CHECK_THROWS_AS(quantize_mask(mask), DataError);

  Volume3D v(2, 2, 2, 0.25);
  const auto rec = npy_from_volume(v, Precision::F16);
  CHECK(rec.descr() == "<f2");
  CHECK(volume_from_npy(read_npy(write_npy(rec))).data == v.data);
  CHECK_THROWS_AS(Volume3D(2, 2, 2, std::vector<double>(7)).validate(), DataError);
}

TEST_CASE("lazy volume store") {
  TempDir dir("stripnet_store_test");
  std::vector<fs::path> paths;
  for (int s = 0; s < 3; ++s) {
    Volume3D v(4, 3, 5);
    for (std::size_t i = 0; i < v.size(); ++i) v.data[i] = static_cast<double>(s * 1000 + static_cast<int>(i)) * 0.5;
    paths.push_back(dir.path / ("scan" + std::to_string(s) + ".npy"));
    save_npy(paths.back(), npy_from_volume(v, Precision::F16));
  }

  SUBCASE("addressing and repeated reads") {
    VolumeStore store = open_lazy(paths);
    CHECK(store.total_slices() == 12);
    CHECK(store.height(1) == 3);
    CHECK(store.width(1) == 5);
    CHECK(store.disk_reads() == 0);
    const auto a = store.slice(2, 3);
    REQUIRE(a->size() == 15);
    CHECK((*a)[0] == static_cast<float>((2000 + 45) * 0.5));
    const auto b = store.slice(2, 3);
    CHECK(*a == *b);
    CHECK(store.disk_reads() == 1);
    CHECK_THROWS_AS(store.slice(3, 0), std::out_of_range);
    CHECK_THROWS_AS(store.slice(0, 4), std::out_of_range);
  }
  SUBCASE("budget of one slice") {
    VolumeStore store = open_lazy(paths, {1});
    for (int i = 0; i < 10; ++i) {
      store.slice(0, 0);
      store.slice(1, 2);
    }
    CHECK(store.peak_resident() == 1);
    CHECK(store.resident() == 1);
    CHECK(store.disk_reads() == 20);
  }
  SUBCASE("concurrent readers see identical data") {
    VolumeStore store = open_lazy(paths, {3});
    std::vector<std::vector<float>> expected;
    for (std::size_t s = 0; s < 3; ++s)
      for (std::size_t z = 0; z < 4; ++z) expected.push_back(*store.slice(s, z));
    std::vector<std::thread> threads;
    std::vector<int> mismatches(4, 0);
    for (int t = 0; t < 4; ++t) {
      threads.emplace_back([&, t] {
        Rng rng(static_cast<std::uint64_t>(t));
        for (int i = 0; i < 500; ++i) {
          const std::size_t k = rng.below(12);
          if (*store.slice(k / 4, k % 4) != expected[k]) ++mismatches[static_cast<std::size_t>(t)];
        }
      });
    }
    for (auto& th : threads) th.join();
    CHECK(mismatches == std::vector<int>(4, 0));
    CHECK(store.peak_resident() <= 3);
  }
  SUBCASE("non-volume files are rejected when opened") {
    const float f[] = {1, 2};
    save_npy(dir.path / "flat.npy", make_npy<float>({2}, f));
    CHECK_THROWS_AS(open_lazy({dir.path / "flat.npy"}), FormatError);
    CHECK_THROWS_AS(open_lazy({dir.path / "absent.npy"}), FormatError);
  }
}

TEST_CASE("store over 550 stub scans addresses 105600 slices") {
  TempDir dir("stripnet_store_550");
  const std::vector<std::int8_t> zeros(192, 0);
  std::vector<fs::path> paths;
  for (int s = 0; s < 550; ++s) {
    paths.push_back(dir.path / ("s" + std::to_string(s) + ".npy"));
    save_npy(paths.back(), make_npy<std::int8_t>({192, 1, 1}, zeros));
  }
  const VolumeStore store = open_lazy(paths);
  CHECK(store.scan_count() == 550);
  CHECK(store.total_slices() == 105'600);
}
