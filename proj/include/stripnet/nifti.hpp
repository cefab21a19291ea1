#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "stripnet/volume.hpp"

namespace stripnet {

enum class NiftiDatatype : std::int16_t { U8 = 2, I16 = 4, F32 = 16, F64 = 64 };

/// Fields of the 348-byte NIfTI-1 header that the reader consumes.
struct NiftiHeader {
  std::int32_t sizeof_hdr = 348;
  std::array<std::int16_t, 8> dim{};
  std::int16_t datatype = 0;
  std::int16_t bitpix = 0;
  std::array<float, 8> pixdim{};
  float vox_offset = 352.0f;
  float scl_slope = 0.0f;
  float scl_inter = 0.0f;
  std::array<char, 4> magic{};
  bool big_endian = false;
};

inline constexpr std::size_t kNiftiHeaderSize = 348;

/// Parses and validates a header; byte order is detected from sizeof_hdr.
NiftiHeader parse_nifti_header(std::span<const std::uint8_t> bytes);

/// Reads an uncompressed single-file (.nii, magic "n+1") 3-D volume.
/// The first NIfTI axis (fastest in the file) becomes the slicing axis d,
/// matching how numpy presents such arrays. Values are scaled by
/// scl_slope/scl_inter when the slope is non-zero.
Volume3D read_nifti(const std::filesystem::path& path);
Volume3D read_nifti(std::span<const std::uint8_t> bytes);

struct NiftiWriteOptions {
  NiftiDatatype datatype = NiftiDatatype::F32;
  bool big_endian = false;
  float scl_slope = 0.0f;
  float scl_inter = 0.0f;
};

/// Serializes a volume as a single-file NIfTI-1 image (raw stored values;
/// no inverse scaling is applied).
std::vector<std::uint8_t> write_nifti(const Volume3D& volume, const NiftiWriteOptions& options = {});
void save_nifti(const std::filesystem::path& path, const Volume3D& volume, const NiftiWriteOptions& options = {});

}  // namespace stripnet
