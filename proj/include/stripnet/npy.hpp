#pragma once

// NPY v1.0 reader/writer.
//
// Written files are byte-identical to numpy.save output for the supported
// little-endian dtypes: the header dictionary lists descr, fortran_order and
// shape in that order and is space padded so that the data starts on a
// 64-byte boundary. Fortran-ordered inputs are rejected.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "stripnet/volume.hpp"

namespace stripnet {

struct NpyRecord {
  Precision dtype = Precision::F64;
  bool fortran_order = false;
  std::vector<std::size_t> shape;
  /// Raw little-endian element bytes.
  std::vector<std::uint8_t> data;

  std::size_t count() const;
  std::string descr() const;
  bool operator==(const NpyRecord&) const = default;
};

std::size_t element_size(Precision p);

/// Parsed header plus the byte offset at which element data begins.
struct NpyHeader {
  Precision dtype = Precision::F64;
  std::vector<std::size_t> shape;
  std::size_t data_offset = 0;

  std::size_t count() const;
};

std::vector<std::uint8_t> write_npy(const NpyRecord& record);
NpyRecord read_npy(std::span<const std::uint8_t> bytes);

/// Parses magic, version and header dictionary only.
NpyHeader read_npy_header(std::span<const std::uint8_t> bytes);

void save_npy(const std::filesystem::path& path, const NpyRecord& record);
NpyRecord load_npy(const std::filesystem::path& path);
NpyHeader load_npy_header(const std::filesystem::path& path);

/// Decodes raw element bytes of the given dtype to doubles.
std::vector<double> decode_elements(Precision dtype, std::span<const std::uint8_t> bytes);

template <class T>
NpyRecord make_npy(std::vector<std::size_t> shape, std::span<const T> values);

std::vector<double> npy_to_doubles(const NpyRecord& record);

/// 3-D records map to (d, h, w); 2-D records to a single slice.
Volume3D volume_from_npy(const NpyRecord& record);

/// Stores a volume at the given precision. F16 and I8 go through
/// quantize_scan / quantize_mask and carry their error checks.
NpyRecord npy_from_volume(const Volume3D& volume, Precision precision);

}  // namespace stripnet
