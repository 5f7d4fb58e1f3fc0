#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "msnet/vec3.hpp"

namespace msnet {

/// Deterministic random source. All sampling is built directly on the
/// mt19937_64 output stream; the standard distributions are avoided because
/// their sequences are implementation-defined and outputs here must be
/// reproducible byte-for-byte across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Unbiased uniform index in [0, n).
  std::size_t index(std::size_t n) {
    const std::uint64_t span = static_cast<std::uint64_t>(n);
    const std::uint64_t threshold = (0 - span) % span;  // 2^64 mod n
    for (;;) {
      const std::uint64_t r = gen_();
      if (r >= threshold) return static_cast<std::size_t>(r % span);
    }
  }

  /// Haar-uniform random rotation (Shoemake's subgroup algorithm).
  Mat3 uniform_rotation() {
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double u3 = uniform01();
    const double two_pi = 6.283185307179586476925286766559;
    const double a = std::sqrt(1.0 - u1);
    const double b = std::sqrt(u1);
    return Mat3::from_quaternion(a * std::sin(two_pi * u2), a * std::cos(two_pi * u2),
                                 b * std::sin(two_pi * u3), b * std::cos(two_pi * u3));
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

  /// Independent generator derived from this one's seed and a stream id.
  Rng substream(std::uint64_t stream) const { return Rng(splitmix64(seed_ ^ (stream + 0x9e3779b97f4a7c15ull))); }

  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace msnet
