#pragma once

// Counter-based random streams. A stream is keyed by (seed, stream index) and
// its n-th output depends only on (key, n), so draws for sample i never depend
// on how many samples were drawn before it or on which thread drew them.

#include <complex>
#include <cstdint>
#include <utility>

namespace vortex {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64();
  /// Uniform on (0, 1), 53-bit resolution.
  double uniform();
  /// Two independent standard normals (Box-Muller).
  std::pair<double, double> normal_pair();
  /// (h + i l)/sqrt(2) with h, l independent standard normals: E|g|^2 = 1.
  std::complex<double> complex_gaussian();

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace vortex
