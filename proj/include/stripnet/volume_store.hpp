#pragma once

#include <filesystem>
#include <list>
#include <memory>
#include <mutex>
#include <unordered_map>
#include <vector>

#include "stripnet/npy.hpp"

namespace stripnet {

struct StoreOptions {
  /// Maximum number of materialized slices kept resident.
  std::size_t budget_slices = 512;
};

/// Lazy, slice-addressable view over a list of 3-D NPY volumes.
///
/// Only headers are read when the store is opened; a slice is read from disk
/// the first time it is requested and kept in an LRU cache bounded by the
/// slice budget. Safe for concurrent readers.
class VolumeStore {
 public:
  using Slice = std::shared_ptr<const std::vector<float>>;

  VolumeStore(std::vector<std::filesystem::path> paths, StoreOptions options = {});

  std::size_t scan_count() const { return entries_.size(); }
  std::size_t slice_count(std::size_t scan) const;
  std::size_t total_slices() const;
  std::size_t height(std::size_t scan) const;
  std::size_t width(std::size_t scan) const;
  const std::filesystem::path& path(std::size_t scan) const;

  /// Slice z of the given scan as float32 (exact for every stored dtype but f64).
  Slice slice(std::size_t scan, std::size_t z) const;

  std::size_t resident() const;
  std::size_t peak_resident() const;
  std::size_t disk_reads() const;

 private:
  struct Entry {
    std::filesystem::path path;
    NpyHeader header;
  };
  using Key = std::uint64_t;
  struct Cached {
    std::list<Key>::iterator position;
    Slice data;
  };

  const Entry& entry(std::size_t scan) const;

  std::vector<Entry> entries_;
  StoreOptions options_;
  std::unique_ptr<std::mutex> mutex_ = std::make_unique<std::mutex>();
  mutable std::list<Key> lru_;
  mutable std::unordered_map<Key, Cached> cache_;
  mutable std::size_t peak_ = 0;
  mutable std::size_t reads_ = 0;
};

/// Opens the store; every file's header is validated up front.
VolumeStore open_lazy(std::vector<std::filesystem::path> paths, StoreOptions options = {});

}  // namespace stripnet
