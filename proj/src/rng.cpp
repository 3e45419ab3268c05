#include "vortex/rng.hpp"

#include <cmath>
#include <numbers>

namespace vortex {

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : key_(mix64(mix64(seed) ^ (stream * 0xd1b54a32d192ed03ULL + 0x8cb92ba72f3d8dd7ULL))) {}

std::uint64_t CounterRng::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
}

double CounterRng::uniform() {
  // (m + 0.5) / 2^53 is never 0 or 1
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

std::pair<double, double> CounterRng::normal_pair() {
  const double r = std::sqrt(-2.0 * std::log(uniform()));
  const double th = 2.0 * std::numbers::pi * uniform();
  return {r * std::cos(th), r * std::sin(th)};
}

std::complex<double> CounterRng::complex_gaussian() {
  const auto [h, l] = normal_pair();
  return {h / std::numbers::sqrt2, l / std::numbers::sqrt2};
}

}  // namespace vortex
