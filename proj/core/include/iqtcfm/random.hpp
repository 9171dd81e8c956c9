#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "iqtcfm/tensor.hpp"

namespace iqtcfm {

/// Counter-based pseudorandom stream (SplitMix64 in counter mode).
///
/// Every draw is a pure function of (seed, counter), so identical seeds
/// give bit-identical sequences on every platform. All randomness in the
/// project flows through this type; standard-library distributions are
/// never used because their output is implementation-defined.
class RandomStream {
 public:
  explicit RandomStream(uint64_t seed) : seed_(seed) {}

  uint64_t seed() const { return seed_; }
  uint64_t counter() const { return counter_; }
  void restore(uint64_t counter) { counter_ = counter; has_spare_ = false; }

  uint64_t next_u64();

  /// Uniform in [0,1), 53 mantissa bits.
  double uniform();
  /// Uniform in (0,1]; safe as a log() argument.
  double uniform_pos();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (one spare cached per pair).
  double normal();

  /// Unbiased integer in [0, n).
  uint64_t below(uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

  /// Tensor of i.i.d. standard normal draws, row-major order.
  Tensor normal_tensor(std::vector<uint32_t> dims);

 private:
  uint64_t seed_;
  uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0;
};

/// Order-sensitive seed derivation. Used to give every record, epoch and
/// subject its own independent stream from one run seed.
uint64_t derive_seed(uint64_t root, std::string_view purpose, uint64_t a = 0, uint64_t b = 0);

/// FNV-1a 64-bit over a byte string; also the basis of config digests.
uint64_t fnv1a64(std::string_view bytes);

}  // namespace iqtcfm
