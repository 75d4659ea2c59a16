#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace statfuse {

/// Philox 4x32-10 counter-based generator (Salmon, Moraes, Dror, Shaw 2011).
///
/// The generator is a bijective mixing function applied to a 128-bit counter
/// under a 64-bit key, so a stream is fully determined by (seed, stream id)
/// and arbitrary substreams can be split off without coordination. All
/// stochastic code in this project draws from it; nothing uses wall-clock
/// entropy.
class Philox4x32 {
 public:
  explicit Philox4x32(std::uint64_t seed, std::uint64_t stream = 0)
      : key0_(static_cast<std::uint32_t>(seed)),
        key1_(static_cast<std::uint32_t>(seed >> 32)),
        stream_(stream),
        seed_(seed) {}

  /// Independent substream; `index` is hashed so adjacent indices do not
  /// yield adjacent counters.
  Philox4x32 substream(std::uint64_t index) const {
    return Philox4x32(seed_, mix64(stream_ ^ mix64(index + 0x9E3779B97F4A7C15ull)));
  }

  std::uint32_t next_u32() {
    if (buffer_pos_ == 4) {
      fill_block();
      buffer_pos_ = 0;
    }
    return buffer_[buffer_pos_++];
  }

  std::uint64_t next_u64() {
    std::uint64_t hi = next_u32();
    std::uint64_t lo = next_u32();
    return (hi << 32) | lo;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, m), unbiased (rejection sampling).
  std::uint64_t below(std::uint64_t m) {
    const std::uint64_t threshold = (-m) % m;  // 2^64 mod m
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % m;
    }
  }

  /// Standard normal via Box-Muller; second variate is cached.
  double next_normal() {
    if (have_cached_normal_) {
      have_cached_normal_ = false;
      return cached_normal_;
    }
    double u1 = 1.0 - next_double();  // (0, 1], keeps log finite
    double u2 = next_double();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 6.283185307179586476925286766559 * u2;
    cached_normal_ = radius * std::sin(angle);
    have_cached_normal_ = true;
    return radius * std::cos(angle);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  static std::uint64_t mix64(std::uint64_t z) {
    // splitmix64 finalizer
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  static void round_once(std::uint32_t& c0, std::uint32_t& c1, std::uint32_t& c2,
                         std::uint32_t& c3, std::uint32_t k0, std::uint32_t k1) {
    const std::uint64_t m0 = 0xD2511F53ull * c0;
    const std::uint64_t m1 = 0xCD9E8D57ull * c2;
    const std::uint32_t hi0 = static_cast<std::uint32_t>(m0 >> 32);
    const std::uint32_t lo0 = static_cast<std::uint32_t>(m0);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(m1 >> 32);
    const std::uint32_t lo1 = static_cast<std::uint32_t>(m1);
    c0 = hi1 ^ c1 ^ k0;
    c1 = lo1;
    c2 = hi0 ^ c3 ^ k1;
    c3 = lo0;
  }

  void fill_block() {
    std::uint32_t c0 = static_cast<std::uint32_t>(block_);
    std::uint32_t c1 = static_cast<std::uint32_t>(block_ >> 32);
    std::uint32_t c2 = static_cast<std::uint32_t>(stream_);
    std::uint32_t c3 = static_cast<std::uint32_t>(stream_ >> 32);
    std::uint32_t k0 = key0_;
    std::uint32_t k1 = key1_;
    for (int round = 0; round < 10; ++round) {
      round_once(c0, c1, c2, c3, k0, k1);
      k0 += 0x9E3779B9u;  // Weyl constants from the Philox reference
      k1 += 0xBB67AE85u;
    }
    buffer_[0] = c0;
    buffer_[1] = c1;
    buffer_[2] = c2;
    buffer_[3] = c3;
    ++block_;
  }

  std::uint32_t key0_, key1_;
  std::uint64_t stream_;
  std::uint64_t seed_;
  std::uint64_t block_ = 0;
  std::uint32_t buffer_[4] = {0, 0, 0, 0};
  int buffer_pos_ = 4;
  bool have_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

}  // namespace statfuse
