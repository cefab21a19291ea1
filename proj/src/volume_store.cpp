#include "stripnet/volume_store.hpp"

#include <fstream>

#include "stripnet/errors.hpp"

namespace stripnet {

VolumeStore::VolumeStore(std::vector<std::filesystem::path> paths, StoreOptions options) : options_(options) {
  if (options_.budget_slices == 0) throw ConfigError("volume store budget must be at least one slice");
  entries_.reserve(paths.size());
  for (auto& p : paths) {
    NpyHeader header = load_npy_header(p);
    if (header.shape.size() != 3) {
      throw FormatError(FormatErrorKind::UnsupportedLayout, p.string() + ": expected a 3-D array");
    }
    entries_.push_back(Entry{std::move(p), std::move(header)});
  }
}

const VolumeStore::Entry& VolumeStore::entry(std::size_t scan) const {
  if (scan >= entries_.size()) {
    throw std::out_of_range("scan index " + std::to_string(scan) + " out of range (" +
                            std::to_string(entries_.size()) + " scans)");
  }
  return entries_[scan];
}

std::size_t VolumeStore::slice_count(std::size_t scan) const { return entry(scan).header.shape[0]; }
std::size_t VolumeStore::height(std::size_t scan) const { return entry(scan).header.shape[1]; }
std::size_t VolumeStore::width(std::size_t scan) const { return entry(scan).header.shape[2]; }
const std::filesystem::path& VolumeStore::path(std::size_t scan) const { return entry(scan).path; }

std::size_t VolumeStore::total_slices() const {
  std::size_t total = 0;
  for (const Entry& e : entries_) total += e.header.shape[0];
  return total;
}

VolumeStore::Slice VolumeStore::slice(std::size_t scan, std::size_t z) const {
  const Entry& e = entry(scan);
  if (z >= e.header.shape[0]) {
    throw std::out_of_range("slice index " + std::to_string(z) + " out of range for " + e.path.string());
  }
  const Key key = (static_cast<Key>(scan) << 32) | static_cast<Key>(z);
  std::lock_guard lock(*mutex_);
  if (auto it = cache_.find(key); it != cache_.end()) {
    lru_.splice(lru_.begin(), lru_, it->second.position);
    return it->second.data;
  }

  const std::size_t es = element_size(e.header.dtype);
  const std::size_t plane = e.header.shape[1] * e.header.shape[2];
  std::vector<std::uint8_t> raw(plane * es);
  std::ifstream in(e.path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorKind::Io, "cannot open " + e.path.string());
  in.seekg(static_cast<std::streamoff>(e.header.data_offset + z * plane * es));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw FormatError(FormatErrorKind::Truncated, e.path.string() + ": short read");
  }
  ++reads_;
  const std::vector<double> values = decode_elements(e.header.dtype, raw);
  auto data = std::make_shared<const std::vector<float>>(values.begin(), values.end());

  while (cache_.size() >= options_.budget_slices) {
    cache_.erase(lru_.back());
    lru_.pop_back();
  }
  lru_.push_front(key);
  cache_.emplace(key, Cached{lru_.begin(), data});
  peak_ = std::max(peak_, cache_.size());
  return data;
}

std::size_t VolumeStore::resident() const {
  std::lock_guard lock(*mutex_);
  return cache_.size();
}

std::size_t VolumeStore::peak_resident() const {
  std::lock_guard lock(*mutex_);
  return peak_;
}

std::size_t VolumeStore::disk_reads() const {
  std::lock_guard lock(*mutex_);
  return reads_;
}

VolumeStore open_lazy(std::vector<std::filesystem::path> paths, StoreOptions options) {
  return VolumeStore(std::move(paths), options);
}

}  // namespace stripnet
