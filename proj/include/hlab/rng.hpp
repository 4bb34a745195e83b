#pragma once

#include <cmath>
#include <cstdint>

namespace hlab {

/// splitmix64 finalizer; used to derive decorrelated sub-seeds from a user
/// seed and a purpose tag.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  return mix64(seed ^ mix64(tag));
}

/// Philox4x32-10 counter-based stream.
///
/// A stream is fully determined by (seed, stream id).  Ensembles assign one
/// stream per path, so the numbers a path sees do not depend on how paths are
/// scheduled across workers, and the whole ensemble is bit-reproducible from
/// the seed alone.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream) noexcept
      : key0_(static_cast<std::uint32_t>(seed)),
        key1_(static_cast<std::uint32_t>(seed >> 32)),
        stream_lo_(static_cast<std::uint32_t>(stream)),
        stream_hi_(static_cast<std::uint32_t>(stream >> 32)) {}

  std::uint32_t next_u32() {
    if (avail_ == 0) refill();
    return out_[--avail_];
  }

  std::uint64_t next_u64() {
    std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  /// Uniform on the open interval (0,1); never returns 0 or 1, so logs and
  /// tangents of the result are always finite.
  double uniform01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller (pairs are cached).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double exponential() { return -std::log(uniform01()); }

  double cauchy() { return std::tan(pi * (uniform01() - 0.5)); }

 private:
  static constexpr double pi = 3.14159265358979323846;

  static void philox_round(std::uint32_t ctr[4], std::uint32_t k0,
                           std::uint32_t k1) {
    const std::uint64_t p0 = 0xD2511F53ull * ctr[0];
    const std::uint64_t p1 = 0xCD9E8D57ull * ctr[2];
    const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
    ctr[0] = hi1 ^ ctr[1] ^ k0;
    ctr[1] = lo1;
    ctr[2] = hi0 ^ ctr[3] ^ k1;
    ctr[3] = lo0;
  }

  void refill() {
    std::uint32_t ctr[4] = {static_cast<std::uint32_t>(block_),
                            static_cast<std::uint32_t>(block_ >> 32),
                            stream_lo_, stream_hi_};
    std::uint32_t k0 = key0_;
    std::uint32_t k1 = key1_;
    for (int round = 0; round < 10; ++round) {
      philox_round(ctr, k0, k1);
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    out_[0] = ctr[0];
    out_[1] = ctr[1];
    out_[2] = ctr[2];
    out_[3] = ctr[3];
    avail_ = 4;
    ++block_;
  }

  std::uint32_t key0_, key1_;
  std::uint32_t stream_lo_, stream_hi_;
  std::uint64_t block_ = 0;
  std::uint32_t out_[4] = {};
  int avail_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace hlab
