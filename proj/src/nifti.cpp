#include "stripnet/nifti.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "stripnet/errors.hpp"

namespace stripnet {

namespace {

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, bool swap) : bytes_(bytes), swap_(swap) {}

  template <class T>
  T get(std::size_t offset) const {
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, bytes_.data() + offset, sizeof(T));
    if (swap_) std::reverse(raw, raw + sizeof(T));
    T v;
    std::memcpy(&v, raw, sizeof(T));
    return v;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  bool swap_;
};

class ByteWriter {
 public:
  ByteWriter(std::vector<std::uint8_t>& out, bool swap) : out_(out), swap_(swap) {}

  template <class T>
  void put(std::size_t offset, T v) {
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    if (swap_) std::reverse(raw, raw + sizeof(T));
    std::memcpy(out_.data() + offset, raw, sizeof(T));
  }

 private:
  std::vector<std::uint8_t>& out_;
  bool swap_;
};

constexpr bool kHostBig = std::endian::native == std::endian::big;

std::int16_t expected_bitpix(std::int16_t datatype) {
  switch (static_cast<NiftiDatatype>(datatype)) {
    case NiftiDatatype::U8: return 8;
    case NiftiDatatype::I16: return 16;
    case NiftiDatatype::F32: return 32;
    case NiftiDatatype::F64: return 64;
  }
  return 0;
}

}  // namespace

NiftiHeader parse_nifti_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kNiftiHeaderSize) throw FormatError(FormatErrorKind::Truncated, "NIfTI header shorter than 348 bytes");
  NiftiHeader h;
  std::int32_t size_native;
  std::memcpy(&size_native, bytes.data(), 4);
  bool swap;
  if (size_native == 348) {
    swap = false;
  } else if (static_cast<std::int32_t>(__builtin_bswap32(static_cast<std::uint32_t>(size_native))) == 348) {
    swap = true;
  } else {
    throw FormatError(FormatErrorKind::BadHeader, "sizeof_hdr is not 348 in either byte order");
  }
  h.big_endian = swap != kHostBig;
  const ByteReader r(bytes, swap);
  for (std::size_t i = 0; i < 8; ++i) h.dim[i] = r.get<std::int16_t>(40 + 2 * i);
  h.datatype = r.get<std::int16_t>(70);
  h.bitpix = r.get<std::int16_t>(72);
  for (std::size_t i = 0; i < 8; ++i) h.pixdim[i] = r.get<float>(76 + 4 * i);
  h.vox_offset = r.get<float>(108);
  h.scl_slope = r.get<float>(112);
  h.scl_inter = r.get<float>(116);
  std::memcpy(h.magic.data(), bytes.data() + 344, 4);

  const std::string magic(h.magic.data(), 3);
  if (magic == "ni1") {
    throw FormatError(FormatErrorKind::UnsupportedLayout, "two-file NIfTI (.hdr/.img) is not supported");
  }
  if (magic != "n+1" || h.magic[3] != '\0') throw FormatError(FormatErrorKind::BadMagic, "NIfTI magic is not \"n+1\"");
  if (h.dim[0] < 1 || h.dim[0] > 7) throw FormatError(FormatErrorKind::BadHeader, "dim[0] outside [1, 7]");
  const std::int16_t bits = expected_bitpix(h.datatype);
  if (bits == 0) {
    throw FormatError(FormatErrorKind::UnsupportedDatatype, "NIfTI datatype code " + std::to_string(h.datatype));
  }
  if (h.bitpix != bits) throw FormatError(FormatErrorKind::BadHeader, "bitpix disagrees with datatype");
  return h;
}

Volume3D read_nifti(std::span<const std::uint8_t> bytes) {
  const NiftiHeader h = parse_nifti_header(bytes);
  if (h.dim[0] != 3) {
    throw FormatError(FormatErrorKind::UnsupportedLayout, "expected a 3-D volume, dim[0] = " + std::to_string(h.dim[0]));
  }
  if (h.dim[1] < 1 || h.dim[2] < 1 || h.dim[3] < 1) throw FormatError(FormatErrorKind::BadHeader, "non-positive extent");
  const auto nx = static_cast<std::size_t>(h.dim[1]);
  const auto ny = static_cast<std::size_t>(h.dim[2]);
  const auto nz = static_cast<std::size_t>(h.dim[3]);
  if (!(h.vox_offset >= 348.0f) || h.vox_offset != std::floor(h.vox_offset)) {
    throw FormatError(FormatErrorKind::BadHeader, "invalid vox_offset");
  }
  const auto offset = static_cast<std::size_t>(h.vox_offset);
  const std::size_t es = static_cast<std::size_t>(h.bitpix) / 8;
  const std::size_t count = nx * ny * nz;
  if (bytes.size() < offset || bytes.size() - offset < count * es) {
    throw FormatError(FormatErrorKind::Truncated, "voxel payload shorter than " + std::to_string(count * es) + " bytes");
  }
  const ByteReader r(bytes, h.big_endian != kHostBig);
  const bool scale = h.scl_slope != 0.0f && std::isfinite(h.scl_slope);
  const double slope = scale ? h.scl_slope : 1.0;
  const double inter = scale && std::isfinite(h.scl_inter) ? h.scl_inter : 0.0;

  Volume3D v(nx, ny, nz);
  for (std::size_t k = 0; k < nz; ++k) {
    for (std::size_t j = 0; j < ny; ++j) {
      for (std::size_t i = 0; i < nx; ++i) {
        const std::size_t at = offset + (i + nx * (j + ny * k)) * es;
        double raw = 0.0;
        switch (static_cast<NiftiDatatype>(h.datatype)) {
          case NiftiDatatype::U8: raw = bytes[at]; break;
          case NiftiDatatype::I16: raw = r.get<std::int16_t>(at); break;
          case NiftiDatatype::F32: raw = r.get<float>(at); break;
          case NiftiDatatype::F64: raw = r.get<double>(at); break;
        }
        v.at(i, j, k) = scale ? slope * raw + inter : raw;
      }
    }
  }
  switch (static_cast<NiftiDatatype>(h.datatype)) {
    case NiftiDatatype::U8: v.precision = Precision::U8; break;
    case NiftiDatatype::I16: v.precision = Precision::I16; break;
    case NiftiDatatype::F32: v.precision = Precision::F32; break;
    case NiftiDatatype::F64: v.precision = Precision::F64; break;
  }
  return v;
}

Volume3D read_nifti(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorKind::Io, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    Volume3D v = read_nifti(bytes);
    v.source = path.string();
    return v;
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> write_nifti(const Volume3D& volume, const NiftiWriteOptions& options) {
  volume.validate();
  if (volume.d > 32767 || volume.h > 32767 || volume.w > 32767) {
    throw FormatError(FormatErrorKind::BadHeader, "extent does not fit a NIfTI-1 dim entry");
  }
  const auto datatype = static_cast<std::int16_t>(options.datatype);
  const std::int16_t bitpix = expected_bitpix(datatype);
  const std::size_t es = static_cast<std::size_t>(bitpix) / 8;
  constexpr std::size_t offset = 352;
  std::vector<std::uint8_t> out(offset + volume.size() * es, 0);
  ByteWriter wr(out, options.big_endian != kHostBig);
  wr.put<std::int32_t>(0, 348);
  out[38] = 'r';
  const std::int16_t dims[8] = {3, static_cast<std::int16_t>(volume.d), static_cast<std::int16_t>(volume.h),
                                static_cast<std::int16_t>(volume.w), 1, 1, 1, 1};
  for (std::size_t i = 0; i < 8; ++i) wr.put<std::int16_t>(40 + 2 * i, dims[i]);
  wr.put<std::int16_t>(70, datatype);
  wr.put<std::int16_t>(72, bitpix);
  for (std::size_t i = 0; i < 8; ++i) wr.put<float>(76 + 4 * i, 1.0f);
  wr.put<float>(108, static_cast<float>(offset));
  wr.put<float>(112, options.scl_slope);
  wr.put<float>(116, options.scl_inter);
  out[123] = 10;  // mm + sec
  std::memcpy(out.data() + 344, "n+1\0", 4);

  for (std::size_t k = 0; k < volume.w; ++k) {
    for (std::size_t j = 0; j < volume.h; ++j) {
      for (std::size_t i = 0; i < volume.d; ++i) {
        const std::size_t at = offset + (i + volume.d * (j + volume.h * k)) * es;
        const double v = volume.at(i, j, k);
        switch (options.datatype) {
          case NiftiDatatype::U8: out[at] = static_cast<std::uint8_t>(v); break;
          case NiftiDatatype::I16: wr.put<std::int16_t>(at, static_cast<std::int16_t>(v)); break;
          case NiftiDatatype::F32: wr.put<float>(at, static_cast<float>(v)); break;
          case NiftiDatatype::F64: wr.put<double>(at, v); break;
        }
      }
    }
  }
  return out;
}

void save_nifti(const std::filesystem::path& path, const Volume3D& volume, const NiftiWriteOptions& options) {
  const auto bytes = write_nifti(volume, options);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace stripnet
