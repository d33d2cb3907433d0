#include "pgs/rng.hpp"

#include <cmath>
#include <numbers>

#include "pgs/error.hpp"

namespace pgs {

namespace {
constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
constexpr double kInvertThreshold = 30.0;
}  // namespace

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

SeededRng::SeededRng(std::uint64_t seed) : seed_(seed), key_(splitmix64(seed + kGamma)) {}

std::uint64_t SeededRng::next_u64() noexcept {
  ++counter_;
  return splitmix64(key_ + counter_ * kGamma);
}

double SeededRng::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::uniform_open() noexcept {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double SeededRng::normal() noexcept {
  if (has_cached_) {
    has_cached_ = false;
    return cached_normal_;
  }
  const double u1 = uniform_open();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  cached_normal_ = r * std::sin(theta);
  has_cached_ = true;
  return r * std::cos(theta);
}

std::uint64_t SeededRng::below(std::uint64_t bound) noexcept {
  if (bound == 0) return 0;
  // Lemire's multiply-shift with rejection.
  for (;;) {
    const auto x = next_u64();
    const auto m = static_cast<unsigned __int128>(x) * bound;
    const auto low = static_cast<std::uint64_t>(m);
    if (low >= (-bound) % bound) return static_cast<std::uint64_t>(m >> 64);
  }
}

SeededRng SeededRng::fork(std::uint64_t stream) const noexcept {
  return SeededRng(splitmix64(key_ ^ splitmix64(stream * kGamma + 0xD1B54A32D192ED03ULL)));
}

std::vector<double> sample_gaussian(SeededRng& rng, std::size_t n, double mean, double stddev) {
  require(stddev >= 0.0, ErrorKind::InvalidArgument, "gaussian std must be nonnegative");
  std::vector<double> out(n, mean);
  if (stddev == 0.0) return out;
  for (auto& v : out) v = mean + stddev * rng.normal();
  return out;
}

namespace {

std::uint64_t poisson_inversion(SeededRng& rng, double rate) {
  const double u = rng.uniform();
  double p = std::exp(-rate);
  double cdf = p;
  std::uint64_t k = 0;
  while (u > cdf) {
    ++k;
    p *= rate / static_cast<double>(k);
    cdf += p;
    // Guards the far tail where cdf saturates below 1 in floating point.
    if (p == 0.0 && cdf < u) break;
  }
  return k;
}

// Hormann (1993), transformed rejection with squeeze.
std::uint64_t poisson_ptrs(SeededRng& rng, double rate) {
  const double slam = std::sqrt(rate);
  const double loglam = std::log(rate);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = rng.uniform() - 0.5;
    const double v = rng.uniform();
    const double us = 0.5 - std::abs(u);
    const double k = std::floor((2.0 * a / us + b) * u + rate + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(k);
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
        -rate + k * loglam - std::lgamma(k + 1.0)) {
      return static_cast<std::uint64_t>(k);
    }
  }
}

}  // namespace

std::uint64_t sample_poisson(SeededRng& rng, double rate) {
  require(rate >= 0.0 && std::isfinite(rate), ErrorKind::InvalidArgument,
          "poisson rate must be finite and nonnegative");
  if (rate == 0.0) return 0;
  return rate < kInvertThreshold ? poisson_inversion(rng, rate) : poisson_ptrs(rng, rate);
}

}  // namespace pgs
