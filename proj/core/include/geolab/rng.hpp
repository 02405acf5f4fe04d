#pragma once

#include <cstdint>

namespace geolab {

/// Counter-based random stream.
///
/// Every draw is a pure function of (key, counter): the key is derived from a
/// seed and up to two stream ids, and draw `i` hashes `key` with `i` through
/// the SplitMix64 finalizer. No state is carried between draws, so any subset
/// of draws can be evaluated in any order (or on any thread) with identical
/// results.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream_a = 0, std::uint64_t stream_b = 0) noexcept;

  std::uint64_t bits(std::uint64_t counter) const noexcept;

  /// Uniform on the open interval (0, 1).
  double uniform(std::uint64_t counter) const noexcept;

  /// Uniform integer in [0, n) for n > 0.
  std::uint64_t below(std::uint64_t counter, std::uint64_t n) const noexcept;

  /// Standard normal; consumes counters 2*counter and 2*counter+1.
  double normal(std::uint64_t counter) const noexcept;

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace geolab
