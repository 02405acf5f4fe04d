#include "geolab/rng.hpp"

#include <cmath>
#include <numbers>

namespace geolab {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream_a, std::uint64_t stream_b) noexcept {
  std::uint64_t k = splitmix64(seed);
  k = splitmix64(k ^ (stream_a * 0xD1B54A32D192ED03ULL));
  k = splitmix64(k ^ (stream_b * 0xAEF17502108EF2D9ULL));
  key_ = k;
}

std::uint64_t CounterRng::bits(std::uint64_t counter) const noexcept {
  return splitmix64(key_ ^ splitmix64(counter));
}

double CounterRng::uniform(std::uint64_t counter) const noexcept {
  // 53 random mantissa bits, shifted off zero.
  return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t CounterRng::below(std::uint64_t counter, std::uint64_t n) const noexcept {
  const unsigned __int128 wide = static_cast<unsigned __int128>(bits(counter)) * n;
  return static_cast<std::uint64_t>(wide >> 64);
}

double CounterRng::normal(std::uint64_t counter) const noexcept {
  const double u1 = uniform(2 * counter);
  const double u2 = uniform(2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace geolab
