#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace stripnet {

/// Seeded generator with platform-independent derived distributions.
///
/// The standard library's distributions are implementation-defined, so
/// uniform and normal draws are derived here directly from mt19937_64 output
/// to keep runs bit-identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  /// Standard normal (Box-Muller, no cached second value).
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Both Box-Muller outputs of one draw: (r cos t, r sin t).
  std::pair<double, double> normal_pair();

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer; used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace stripnet
