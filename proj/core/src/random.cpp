#include "iqtcfm/random.hpp"

#include <cmath>

namespace iqtcfm {
namespace {

constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ull;

inline uint64_t splitmix_fin(uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

}  // namespace

uint64_t RandomStream::next_u64() { return splitmix_fin(seed_ + (++counter_) * kGolden); }

double RandomStream::uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

double RandomStream::uniform_pos() { return double((next_u64() >> 11) + 1) * 0x1.0p-53; }

double RandomStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform_pos();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 6.283185307179586476925286766559 * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

uint64_t RandomStream::below(uint64_t n) {
  if (n <= 1) return 0;
  uint64_t bound = UINT64_MAX - UINT64_MAX % n;
  uint64_t x;
  do {
    x = next_u64();
  } while (x >= bound);
  return x % n;
}

Tensor RandomStream::normal_tensor(std::vector<uint32_t> dims) {
  Tensor t(std::move(dims));
  for (float& v : t.data) v = float(normal());
  return t;
}

uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

uint64_t derive_seed(uint64_t root, std::string_view purpose, uint64_t a, uint64_t b) {
  uint64_t h = splitmix_fin(root + kGolden);
  h = splitmix_fin(h ^ fnv1a64(purpose));
  h = splitmix_fin(h ^ (a + kGolden));
  h = splitmix_fin(h ^ (b + 2 * kGolden));
  return h;
}

}  // namespace iqtcfm
