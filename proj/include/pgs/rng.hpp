#pragma once

#include <cstdint>
#include <vector>

namespace pgs {

/// Counter-based generator: output n is a SplitMix64 finalizer applied to
/// key + n * golden-gamma, so a stream depends only on (seed, draw index).
///
/// Instances are single-owner. Parallel work should `fork` child streams
/// rather than share one generator.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Uniform on (0, 1).
  double uniform_open() noexcept;
  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal() noexcept;
  std::uint64_t below(std::uint64_t bound) noexcept;

  /// Independent child stream; deterministic in (seed, stream).
  SeededRng fork(std::uint64_t stream) const noexcept;

 private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

std::vector<double> sample_gaussian(SeededRng& rng, std::size_t n, double mean, double stddev);

/// Exact Poisson draw. Inversion below rate 30, Hormann's PTRS at or above.
std::uint64_t sample_poisson(SeededRng& rng, double rate);

}  // namespace pgs
