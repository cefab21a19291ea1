#include "stripnet/npy.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <optional>

#include "stripnet/errors.hpp"
#include "stripnet/half.hpp"

namespace stripnet {

namespace {

constexpr std::uint8_t kMagic[6] = {0x93, 'N', 'U', 'M', 'P', 'Y'};
constexpr std::size_t kAlign = 64;

template <class T>
T load_le(const std::uint8_t* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    auto* b = reinterpret_cast<std::uint8_t*>(&v);
    std::reverse(b, b + sizeof(T));
  }
  return v;
}

template <class T>
void store_le(std::uint8_t* p, T v) {
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    auto* b = reinterpret_cast<std::uint8_t*>(&v);
    std::reverse(b, b + sizeof(T));
  }
  std::memcpy(p, &v, sizeof(T));
}

std::optional<Precision> parse_descr(const std::string& d) {
  if (d == "<f8") return Precision::F64;
  if (d == "<f4") return Precision::F32;
  if (d == "<f2") return Precision::F16;
  if (d == "<i2") return Precision::I16;
  if (d == "|i1" || d == "<i1") return Precision::I8;
  if (d == "|u1" || d == "<u1") return Precision::U8;
  return std::nullopt;
}

std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  return n;
}

// Minimal reader for the Python literal dictionary numpy writes.
class HeaderParser {
 public:
  explicit HeaderParser(std::string_view text) : text_(text) {}

  NpyHeader parse() {
    std::optional<std::string> descr;
    std::optional<bool> fortran;
    std::optional<std::vector<std::size_t>> shape;
    expect('{');
    while (true) {
      skip_ws();
      if (peek() == '}') {
        ++pos_;
        break;
      }
      const std::string key = quoted();
      expect(':');
      skip_ws();
      if (key == "descr") {
        descr = quoted();
      } else if (key == "fortran_order") {
        fortran = boolean();
      } else if (key == "shape") {
        shape = tuple();
      } else {
        fail("unexpected key '" + key + "'");
      }
      skip_ws();
      if (peek() == ',') ++pos_;
    }
    if (!descr || !fortran || !shape) fail("missing descr, fortran_order or shape");
    if (*fortran) throw FormatError(FormatErrorKind::UnsupportedLayout, "fortran_order arrays are not supported");
    const auto dtype = parse_descr(*descr);
    if (!dtype) throw FormatError(FormatErrorKind::UnsupportedDatatype, "dtype '" + *descr + "'");
    return NpyHeader{*dtype, std::move(*shape), 0};
  }

 private:
  [[noreturn]] void fail(const std::string& why) const {
    throw FormatError(FormatErrorKind::BadHeader, "npy header: " + why);
  }
  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }
  void skip_ws() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
  }
  void expect(char c) {
    skip_ws();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }
  std::string quoted() {
    skip_ws();
    const char q = peek();
    if (q != '\'' && q != '"') fail("expected quoted string");
    const std::size_t end = text_.find(q, pos_ + 1);
    if (end == std::string_view::npos) fail("unterminated string");
    std::string s(text_.substr(pos_ + 1, end - pos_ - 1));
    pos_ = end + 1;
    return s;
  }
  bool boolean() {
    if (text_.substr(pos_, 4) == "True") {
      pos_ += 4;
      return true;
    }
    if (text_.substr(pos_, 5) == "False") {
      pos_ += 5;
      return false;
    }
    fail("expected True or False");
  }
  std::vector<std::size_t> tuple() {
    expect('(');
    std::vector<std::size_t> dims;
    while (true) {
      skip_ws();
      if (peek() == ')') {
        ++pos_;
        return dims;
      }
      if (peek() < '0' || peek() > '9') fail("bad shape entry");
      std::size_t v = 0;
      while (peek() >= '0' && peek() <= '9') v = v * 10 + static_cast<std::size_t>(text_[pos_++] - '0');
      dims.push_back(v);
      skip_ws();
      if (peek() == ',') ++pos_;
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorKind::Io, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

std::size_t element_size(Precision p) {
  switch (p) {
    case Precision::F64: return 8;
    case Precision::F32: return 4;
    case Precision::F16: return 2;
    case Precision::I16: return 2;
    case Precision::I8: return 1;
    case Precision::U8: return 1;
  }
  return 0;
}

std::size_t NpyRecord::count() const { return product(shape); }
std::size_t NpyHeader::count() const { return product(shape); }

std::string NpyRecord::descr() const {
  switch (dtype) {
    case Precision::F64: return "<f8";
    case Precision::F32: return "<f4";
    case Precision::F16: return "<f2";
    case Precision::I16: return "<i2";
    case Precision::I8: return "|i1";
    case Precision::U8: return "|u1";
  }
  return "";
}

std::vector<std::uint8_t> write_npy(const NpyRecord& record) {
  if (record.fortran_order) throw FormatError(FormatErrorKind::UnsupportedLayout, "fortran_order output is not supported");
  if (record.data.size() != record.count() * element_size(record.dtype)) {
    throw FormatError(FormatErrorKind::LengthMismatch, "payload has " + std::to_string(record.data.size()) +
                                                           " bytes for " + std::to_string(record.count()) + " elements");
  }
  std::string dict = "{'descr': '" + record.descr() + "', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < record.shape.size(); ++i) {
    if (i) dict += ", ";
    dict += std::to_string(record.shape[i]);
  }
  if (record.shape.size() == 1) dict += ",";
  dict += "), }";
  const std::size_t preamble = sizeof(kMagic) + 2 + 2;
  const std::size_t unpadded = preamble + dict.size() + 1;
  const std::size_t total = (unpadded + kAlign - 1) / kAlign * kAlign;
  dict.append(total - unpadded, ' ');
  dict.push_back('\n');
  if (dict.size() > 0xFFFF) throw FormatError(FormatErrorKind::BadHeader, "header too long for version 1.0");

  std::vector<std::uint8_t> out(total + record.data.size());
  std::copy(std::begin(kMagic), std::end(kMagic), out.begin());
  out[6] = 1;
  out[7] = 0;
  store_le<std::uint16_t>(out.data() + 8, static_cast<std::uint16_t>(dict.size()));
  std::copy(dict.begin(), dict.end(), out.begin() + static_cast<std::ptrdiff_t>(preamble));
  std::copy(record.data.begin(), record.data.end(), out.begin() + static_cast<std::ptrdiff_t>(total));
  return out;
}

NpyHeader read_npy_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 10 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw FormatError(FormatErrorKind::BadMagic, "not an NPY file");
  }
  const std::uint8_t major = bytes[6];
  std::size_t header_len = 0;
  std::size_t preamble = 0;
  if (major == 1) {
    header_len = load_le<std::uint16_t>(bytes.data() + 8);
    preamble = 10;
  } else if (major == 2 || major == 3) {
    if (bytes.size() < 12) throw FormatError(FormatErrorKind::Truncated, "npy preamble");
    header_len = load_le<std::uint32_t>(bytes.data() + 8);
    preamble = 12;
  } else {
    throw FormatError(FormatErrorKind::BadMagic, "unsupported NPY version " + std::to_string(major));
  }
  if (bytes.size() < preamble + header_len) throw FormatError(FormatErrorKind::Truncated, "npy header");
  const std::string_view text(reinterpret_cast<const char*>(bytes.data() + preamble), header_len);
  NpyHeader header = HeaderParser(text).parse();
  header.data_offset = preamble + header_len;
  return header;
}

NpyRecord read_npy(std::span<const std::uint8_t> bytes) {
  const NpyHeader header = read_npy_header(bytes);
  const std::size_t expected = header.count() * element_size(header.dtype);
  const std::size_t available = bytes.size() - header.data_offset;
  if (available != expected) {
    throw FormatError(FormatErrorKind::LengthMismatch, "shape needs " + std::to_string(expected) +
                                                           " bytes, payload has " + std::to_string(available));
  }
  NpyRecord r;
  r.dtype = header.dtype;
  r.shape = header.shape;
  r.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header.data_offset), bytes.end());
  return r;
}

void save_npy(const std::filesystem::path& path, const NpyRecord& record) {
  const auto bytes = write_npy(record);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatErrorKind::Io, "short write to " + path.string());
}

NpyRecord load_npy(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return read_npy(bytes);
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), path.string() + ": " + e.what());
  }
}

NpyHeader load_npy_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorKind::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> head(12);
  in.read(reinterpret_cast<char*>(head.data()), 12);
  head.resize(static_cast<std::size_t>(in.gcount()));
  if (head.size() < 10) throw FormatError(FormatErrorKind::BadMagic, path.string() + ": not an NPY file");
  const std::size_t header_len =
      head[6] == 1 ? load_le<std::uint16_t>(head.data() + 8)
                   : (head.size() >= 12 ? load_le<std::uint32_t>(head.data() + 8) : 0);
  std::vector<std::uint8_t> bytes(12 + header_len);
  in.clear();
  in.seekg(0);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  bytes.resize(static_cast<std::size_t>(in.gcount()));
  NpyHeader header = read_npy_header(bytes);
  const auto file_size = std::filesystem::file_size(path);
  if (file_size != header.data_offset + header.count() * element_size(header.dtype)) {
    throw FormatError(FormatErrorKind::LengthMismatch, path.string() + ": payload size disagrees with shape");
  }
  return header;
}

std::vector<double> decode_elements(Precision dtype, std::span<const std::uint8_t> bytes) {
  const std::size_t es = element_size(dtype);
  const std::size_t n = bytes.size() / es;
  std::vector<double> out(n);
  const std::uint8_t* p = bytes.data();
  for (std::size_t i = 0; i < n; ++i, p += es) {
    switch (dtype) {
      case Precision::F64: out[i] = load_le<double>(p); break;
      case Precision::F32: out[i] = load_le<float>(p); break;
      case Precision::F16: out[i] = half_bits_to_double(load_le<std::uint16_t>(p)); break;
      case Precision::I16: out[i] = load_le<std::int16_t>(p); break;
      case Precision::I8: out[i] = load_le<std::int8_t>(p); break;
      case Precision::U8: out[i] = load_le<std::uint8_t>(p); break;
    }
  }
  return out;
}

namespace {
template <class T>
constexpr Precision precision_of() {
  if constexpr (std::is_same_v<T, double>) return Precision::F64;
  else if constexpr (std::is_same_v<T, float>) return Precision::F32;
  else if constexpr (std::is_same_v<T, std::uint16_t>) return Precision::F16;  // raw binary16 bits
  else if constexpr (std::is_same_v<T, std::int16_t>) return Precision::I16;
  else if constexpr (std::is_same_v<T, std::int8_t>) return Precision::I8;
  else return Precision::U8;
}
}  // namespace

template <class T>
NpyRecord make_npy(std::vector<std::size_t> shape, std::span<const T> values) {
  NpyRecord r;
  r.dtype = precision_of<T>();
  r.shape = std::move(shape);
  if (values.size() != r.count()) {
    throw FormatError(FormatErrorKind::LengthMismatch,
                      std::to_string(values.size()) + " values for " + std::to_string(r.count()) + " elements");
  }
  r.data.resize(values.size() * sizeof(T));
  for (std::size_t i = 0; i < values.size(); ++i) store_le<T>(r.data.data() + i * sizeof(T), values[i]);
  return r;
}

template NpyRecord make_npy(std::vector<std::size_t>, std::span<const double>);
template NpyRecord make_npy(std::vector<std::size_t>, std::span<const float>);
template NpyRecord make_npy(std::vector<std::size_t>, std::span<const std::uint16_t>);
template NpyRecord make_npy(std::vector<std::size_t>, std::span<const std::int16_t>);
template NpyRecord make_npy(std::vector<std::size_t>, std::span<const std::int8_t>);
template NpyRecord make_npy(std::vector<std::size_t>, std::span<const std::uint8_t>);

std::vector<double> npy_to_doubles(const NpyRecord& record) { return decode_elements(record.dtype, record.data); }

Volume3D volume_from_npy(const NpyRecord& record) {
  std::size_t d = 1, h = 1, w = 1;
  if (record.shape.size() == 3) {
    d = record.shape[0];
    h = record.shape[1];
    w = record.shape[2];
  } else if (record.shape.size() == 2) {
    h = record.shape[0];
    w = record.shape[1];
  } else {
    throw FormatError(FormatErrorKind::UnsupportedLayout,
                      "expected a 2-D or 3-D array, got rank " + std::to_string(record.shape.size()));
  }
  Volume3D v(d, h, w, npy_to_doubles(record));
  v.precision = record.dtype;
  return v;
}

NpyRecord npy_from_volume(const Volume3D& volume, Precision precision) {
  volume.validate();
  std::vector<std::size_t> shape{volume.d, volume.h, volume.w};
  switch (precision) {
    case Precision::F64:
      return make_npy<double>(shape, volume.data);
    case Precision::F32: {
      std::vector<float> v(volume.data.begin(), volume.data.end());
      return make_npy<float>(shape, v);
    }
    case Precision::F16: {
      const auto bits = quantize_scan(volume);
      return make_npy<std::uint16_t>(shape, bits);
    }
    case Precision::I8: {
      const auto mask = quantize_mask(volume);
      return make_npy<std::int8_t>(shape, mask);
    }
    case Precision::I16: {
      std::vector<std::int16_t> v(volume.size());
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<std::int16_t>(volume.data[i]);
      return make_npy<std::int16_t>(shape, v);
    }
    case Precision::U8: {
      std::vector<std::uint8_t> v(volume.size());
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<std::uint8_t>(volume.data[i]);
      return make_npy<std::uint8_t>(shape, v);
    }
  }
  throw ContractViolation("npy_from_volume: unknown precision");
}

}  // namespace stripnet
